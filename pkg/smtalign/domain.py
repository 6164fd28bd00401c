"""Placement records, feature encoding and dataset splitting."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from smtalign.util import config_hash

logger = logging.getLogger(__name__)

# Level sets in the order they are one-hot encoded.
COMPONENT_SIZE_LEVELS = (80, 180, 500)      # 1000 um^2
COMPONENT_TYPE_LEVELS = ("R", "C")
PAD_SIZE_LEVELS = (44, 102, 280)            # 1000 um^2
PAD_GAP_LEVELS = (160, 260, 250, 450, 460)  # um

CATEGORICAL_LEVELS = {
    "component_size_class": COMPONENT_SIZE_LEVELS,
    "component_type": COMPONENT_TYPE_LEVELS,
    "pad_size_class": PAD_SIZE_LEVELS,
    "pad_gap": PAD_GAP_LEVELS,
}

PASTE_FIELDS = (
    "volume_avg_pct", "volume_diff_pct",
    "paste_offset_x1", "paste_offset_y1", "paste_offset_x2", "paste_offset_y2",
)
PLACEMENT_FIELDS = ("pre_offset_x", "pre_offset_y", "pre_offset_theta")
TARGETS = ("post_x", "post_y", "post_theta")

FEATURE_NAMES = tuple(
    [f"{name}={level}" for name, levels in CATEGORICAL_LEVELS.items() for level in levels]
    + list(PASTE_FIELDS)
    + list(PLACEMENT_FIELDS)
)
FEATURE_DIM = len(FEATURE_NAMES)
PLACEMENT_SLOTS = slice(FEATURE_DIM - len(PLACEMENT_FIELDS), FEATURE_DIM)

# Identifies the encoding; persisted models carry it and are refused when it differs.
ENCODING_HASH = config_hash({"features": list(FEATURE_NAMES), "scaling": "raw"})

AREA_TOLERANCE = 0.01

# A feature vector is a float64 array of length FEATURE_DIM.
FeatureVector = np.ndarray


class EncodingError(ValueError):
    """Categorical value outside its level set."""


class DirectoryError(ValueError):
    """Pad dimensions inconsistent with the pad size class."""


class DatasetSizeError(ValueError):
    pass


def _check_level(field_name: str, value) -> int:
    """Return the one-hot position of value in the level set of field_name."""
    levels = CATEGORICAL_LEVELS[field_name]
    try:
        return levels.index(value)
    except ValueError:
        raise EncodingError(f"Unknown level for {field_name}: {value!r} (expected one of {levels})")


def _check_finite(owner: str, values: dict) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{owner}.{name} must be finite, got {value}")


@dataclass(frozen=True)
class ComponentDirectory:
    """Component and pad directory: the four categorical variables plus linear pad dimensions."""

    component_size_class: int
    component_type: str
    pad_size_class: int
    pad_gap: int
    pad_length: float
    pad_width: float

    def __post_init__(self):
        for name in CATEGORICAL_LEVELS:
            _check_level(name, getattr(self, name))
        if self.pad_length <= 0 or self.pad_width <= 0:
            raise DirectoryError(f"Pad dimensions must be positive, got {self.pad_length} x {self.pad_width}")
        area = self.pad_length * self.pad_width
        expected = self.pad_size_class * 1000.0
        if abs(area - expected) > AREA_TOLERANCE * expected:
            raise DirectoryError(
                f"Pad {self.pad_length} x {self.pad_width} um = {area:.0f} um^2 does not match "
                f"pad size class {self.pad_size_class} ({expected:.0f} um^2)"
            )


@dataclass(frozen=True)
class PasteState:
    volume_avg_pct: float
    volume_diff_pct: float
    paste_offset_x1: float
    paste_offset_y1: float
    paste_offset_x2: float
    paste_offset_y2: float

    def __post_init__(self):
        _check_finite("paste", {name: getattr(self, name) for name in PASTE_FIELDS})
        if self.volume_avg_pct <= 0:
            raise ValueError(f"paste.volume_avg_pct must be positive, got {self.volume_avg_pct}")

    @property
    def centroid(self) -> tuple[float, float]:
        """Midpoint of the two deposited paste centers."""
        return ((self.paste_offset_x1 + self.paste_offset_x2) / 2,
                (self.paste_offset_y1 + self.paste_offset_y2) / 2)


@dataclass(frozen=True)
class PlacementSetting:
    pre_offset_x: float
    pre_offset_y: float
    pre_offset_theta: float

    def __post_init__(self):
        _check_finite("placement", {name: getattr(self, name) for name in PLACEMENT_FIELDS})

    def as_array(self) -> np.ndarray:
        return np.array([self.pre_offset_x, self.pre_offset_y, self.pre_offset_theta], dtype=float)

    @classmethod
    def from_array(cls, values) -> 'PlacementSetting':
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class PostOffsets:
    post_x: float
    post_y: float
    post_theta: float

    def __post_init__(self):
        _check_finite("targets", {name: getattr(self, name) for name in TARGETS})

    def get(self, target: str) -> float:
        return getattr(self, target)


@dataclass(frozen=True)
class PlacementRecord:
    """One placement event; targets are None for unlabeled (inference) records."""

    directory: ComponentDirectory
    paste: PasteState
    placement: PlacementSetting
    targets: Optional[PostOffsets] = None

    @property
    def is_labeled(self) -> bool:
        return self.targets is not None

    def unlabeled(self) -> 'PlacementRecord':
        return PlacementRecord(self.directory, self.paste, self.placement, None)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[PlacementRecord, ...]
    validation: tuple[PlacementRecord, ...]
    test: tuple[PlacementRecord, ...]
    train_index: tuple[int, ...] = field(default=(), repr=False)
    validation_index: tuple[int, ...] = field(default=(), repr=False)
    test_index: tuple[int, ...] = field(default=(), repr=False)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def encode_features(record: PlacementRecord) -> FeatureVector:
    """
    Encode a record as a feature vector: one-hot groups for the four categorical variables
    (level order as in CATEGORICAL_LEVELS), then the six paste and three placement values, unscaled.
    """
    values = np.zeros(FEATURE_DIM, dtype=np.float64)
    offset = 0
    for name, levels in CATEGORICAL_LEVELS.items():
        values[offset + _check_level(name, getattr(record.directory, name))] = 1.0
        offset += len(levels)
    for name in PASTE_FIELDS:
        values[offset] = getattr(record.paste, name)
        offset += 1
    for name in PLACEMENT_FIELDS:
        values[offset] = getattr(record.placement, name)
        offset += 1
    return values


def encode_matrix(records: Sequence[PlacementRecord]) -> np.ndarray:
    """Stack the encoded records into an (n, FEATURE_DIM) matrix."""
    if not records:
        return np.zeros((0, FEATURE_DIM), dtype=np.float64)
    return np.vstack([encode_features(record) for record in records])


def target_vector(records: Sequence[PlacementRecord], target: str) -> np.ndarray:
    """Return one target column; every record must be labeled."""
    if target not in TARGETS:
        raise ValueError(f"Unknown target '{target}', expected one of {TARGETS}")
    missing = [i for i, record in enumerate(records) if not record.is_labeled]
    if missing:
        raise ValueError(f"{len(missing)} unlabeled records (first at index {missing[0]}); training requires labels")
    return np.array([record.targets.get(target) for record in records], dtype=np.float64)


def _split_sizes(n: int) -> tuple[int, int, int]:
    n_train = math.floor(0.7 * n + 0.5)
    n_validation = math.floor(0.1 * n + 0.5)
    return n_train, n_validation, n - n_train - n_validation


def split_dataset(records: Sequence[PlacementRecord], seed: int) -> DatasetSplit:
    """Seeded uniform shuffle, then a contiguous 70:10:20 cut into train, validation and test."""
    if len(records) < 10:
        raise DatasetSizeError(f"At least 10 labeled records are needed to split, got {len(records)}")
    unlabeled = sum(1 for record in records if not record.is_labeled)
    if unlabeled:
        raise ValueError(f"Cannot split: {unlabeled} records are unlabeled")

    order = np.random.default_rng(seed).permutation(len(records))
    n_train, n_validation, _ = _split_sizes(len(records))
    parts = (
        order[:n_train],
        order[n_train:n_train + n_validation],
        order[n_train + n_validation:],
    )
    train_index, validation_index, test_index = (tuple(int(i) for i in part) for part in parts)
    split = DatasetSplit(
        train=tuple(records[i] for i in train_index),
        validation=tuple(records[i] for i in validation_index),
        test=tuple(records[i] for i in test_index),
        train_index=train_index,
        validation_index=validation_index,
        test_index=test_index,
    )
    logger.info("Split %d records (seed %d) into %d/%d/%d", len(records), seed, *split.sizes)
    return split


def split_from_indices(records: Sequence[PlacementRecord], train_index, validation_index, test_index) -> DatasetSplit:
    """Rebuild a split from stored record indices."""
    indices = list(train_index) + list(validation_index) + list(test_index)
    if sorted(indices) != list(range(len(records))):
        raise ValueError("Stored split indices do not partition the dataset")
    return DatasetSplit(
        train=tuple(records[i] for i in train_index),
        validation=tuple(records[i] for i in validation_index),
        test=tuple(records[i] for i in test_index),
        train_index=tuple(train_index),
        validation_index=tuple(validation_index),
        test_index=tuple(test_index),
    )
