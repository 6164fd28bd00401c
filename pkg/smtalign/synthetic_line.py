"""
Synthetic placement line: a parametric self-alignment oracle and a seeded dataset generator
standing in for measured placement experiments.

The oracle blends the pre-reflow placement with the paste centroid. Alignment strength grows
with average paste volume and shrinks with the volume difference between the pads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping, Optional

import numpy as np

from smtalign.config import ConfigError, build_config
from smtalign.domain import (
    ComponentDirectory, PASTE_FIELDS, PLACEMENT_FIELDS,
    PasteState, PlacementRecord, PlacementSetting, PostOffsets,
)

logger = logging.getLogger(__name__)

MAX_STRENGTH = 0.95
RESAMPLE_TRIES = 100

# Chip presets by metric size code; pad width equals component width, pad length = area / width.
DIRECTORY_PRESETS = {
    "R1005": ComponentDirectory(500, "R", 280, 450, 560.0, 500.0),
    "C1005": ComponentDirectory(500, "C", 280, 460, 560.0, 500.0),
    "R0603": ComponentDirectory(180, "R", 102, 260, 340.0, 300.0),
    "C0603": ComponentDirectory(180, "C", 102, 250, 340.0, 300.0),
    "R0402": ComponentDirectory(80, "R", 44, 160, 220.0, 200.0),
    "C0402": ComponentDirectory(80, "C", 44, 160, 220.0, 200.0),
}


@dataclass(frozen=True)
class ContinuousRange:
    minimum: float
    maximum: float
    mean: float
    sd: float

    def __post_init__(self):
        if not self.minimum <= self.maximum:
            raise ValueError(f"minimum {self.minimum} exceeds maximum {self.maximum}")
        if self.sd < 0:
            raise ValueError(f"sd must be non-negative, got {self.sd}")


# Measured envelope of the continuous variables: (min, max, mean, sd).
MEASURED_RANGES = {
    "volume_avg_pct": ContinuousRange(46.32, 154.77, 95.25, 16.62),
    "volume_diff_pct": ContinuousRange(-91.48, 96.40, 2.21, 27.85),
    "paste_offset_x1": ContinuousRange(188.54, 698.81, 403.96, 159.05),
    "paste_offset_y1": ContinuousRange(18.86, 316.63, 129.22, 64.60),
    "paste_offset_x2": ContinuousRange(-412.58, -76.96, -216.29, 90.52),
    "paste_offset_y2": ContinuousRange(8.13, 316.63, 130.00, 62.87),
    "pre_offset_x": ContinuousRange(-37.15, 316.91, 123.16, 78.56),
    "pre_offset_y": ContinuousRange(-97.88, 264.57, 61.38, 58.78),
    "pre_offset_theta": ContinuousRange(-32.90, 24.78, -0.12, 2.98),
}


@dataclass(frozen=True)
class OracleParams:
    align_base: float = 0.7
    align_vol_gain: float = 0.5
    align_diff_penalty: float = 0.3
    noise_sigma_xy: float = 10.0
    noise_sigma_theta: float = 0.8
    seed: int = 0
    fixed_strength: Optional[float] = None

    def __post_init__(self):
        if self.noise_sigma_xy < 0:
            raise ValueError(f"noise_sigma_xy must be non-negative, got {self.noise_sigma_xy}")
        if self.noise_sigma_theta < 0:
            raise ValueError(f"noise_sigma_theta must be non-negative, got {self.noise_sigma_theta}")
        if self.fixed_strength is not None and not 0.0 <= self.fixed_strength <= 1.0:
            raise ValueError(f"fixed_strength must lie in [0, 1], got {self.fixed_strength}")


@dataclass(frozen=True)
class GeneratorConfig:
    records_per_type: int = 660
    directories: tuple[ComponentDirectory, ...] = tuple(DIRECTORY_PRESETS.values())
    ranges: Mapping[str, ContinuousRange] = field(default_factory=lambda: dict(MEASURED_RANGES))
    oracle: OracleParams = OracleParams()
    workers: int = 1

    def __post_init__(self):
        if self.records_per_type < 1:
            raise ValueError(f"records_per_type must be at least 1, got {self.records_per_type}")
        if not self.directories:
            raise ValueError("directories must not be empty")
        missing = [name for name in PASTE_FIELDS + PLACEMENT_FIELDS if name not in self.ranges]
        if missing:
            raise ValueError(f"ranges.{missing[0]} is missing")

    @property
    def seed(self) -> int:
        return self.oracle.seed

    def with_seed(self, seed: int) -> 'GeneratorConfig':
        return replace(self, oracle=replace(self.oracle, seed=seed))

    @classmethod
    def from_mapping(cls, mapping: Optional[Mapping[str, Any]]) -> 'GeneratorConfig':
        """Build from a `generator` config section; directories are preset names or field mappings."""
        mapping = dict(mapping or {})
        oracle_settings = dict(mapping.pop("oracle", None) or {})
        if "seed" in mapping:
            oracle_settings["seed"] = mapping.pop("seed")
        oracle = build_config(OracleParams, oracle_settings, "generator.oracle")

        kwargs: dict[str, Any] = {"oracle": oracle}
        if "directories" in mapping:
            kwargs["directories"] = tuple(
                _directory_from_setting(entry, n) for n, entry in enumerate(mapping.pop("directories"))
            )
        if "ranges" in mapping:
            ranges = dict(MEASURED_RANGES)
            for name, settings in (mapping.pop("ranges") or {}).items():
                if name not in MEASURED_RANGES:
                    raise ConfigError(f"generator.ranges.{name}: unknown variable")
                current = asdict(ranges[name])
                current.update(settings)
                ranges[name] = build_config(ContinuousRange, current, f"generator.ranges.{name}")
            kwargs["ranges"] = ranges
        kwargs.update(mapping)
        return build_config(cls, kwargs, "generator")

    def to_dict(self) -> dict:
        return {
            "records_per_type": self.records_per_type,
            "directories": [asdict(directory) for directory in self.directories],
            "ranges": {name: asdict(spec) for name, spec in sorted(self.ranges.items())},
            "oracle": asdict(self.oracle),
            "workers": self.workers,
        }


def _directory_from_setting(entry, position: int) -> ComponentDirectory:
    if isinstance(entry, str):
        if entry not in DIRECTORY_PRESETS:
            raise ConfigError(
                f"generator.directories[{position}]: unknown preset '{entry}' "
                f"(expected one of {sorted(DIRECTORY_PRESETS)})"
            )
        return DIRECTORY_PRESETS[entry]
    if isinstance(entry, Mapping):
        return build_config(ComponentDirectory, entry, f"generator.directories[{position}]")
    raise ConfigError(f"generator.directories[{position}]: expected a preset name or a mapping")


def alignment_strength(paste: PasteState, params: OracleParams) -> float:
    """Self-alignment strength s in [0, MAX_STRENGTH], unless fixed_strength overrides it."""
    if params.fixed_strength is not None:
        return params.fixed_strength
    s = (params.align_base
         + params.align_vol_gain * (paste.volume_avg_pct / 100 - 1)
         - params.align_diff_penalty * abs(paste.volume_diff_pct) / 100)
    return min(max(s, 0.0), MAX_STRENGTH)


def simulate_reflow(record: PlacementRecord, params: OracleParams,
                    rng: Optional[np.random.Generator] = None) -> PostOffsets:
    """
    Post-reflow offsets of a placement: a blend of the placement and the paste centroid
    (rotation blends toward the paste slope), plus Gaussian noise.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    paste, chi = record.paste, record.placement
    s = alignment_strength(paste, params)
    centroid_x, centroid_y = paste.centroid
    slope = math.degrees(math.atan2(paste.paste_offset_y1 - paste.paste_offset_y2,
                                    paste.paste_offset_x1 - paste.paste_offset_x2))
    noise = rng.normal(0.0, [params.noise_sigma_xy, params.noise_sigma_xy, params.noise_sigma_theta])
    return PostOffsets(
        post_x=(1 - s) * chi.pre_offset_x + s * centroid_x + float(noise[0]),
        post_y=(1 - s) * chi.pre_offset_y + s * centroid_y + float(noise[1]),
        post_theta=(1 - s) * chi.pre_offset_theta + s * slope + float(noise[2]),
    )


def sample_truncated_normal(rng: np.random.Generator, spec: ContinuousRange, size: int) -> np.ndarray:
    """Normal draws restricted to [min, max]: out-of-range draws are redrawn, then clipped."""
    values = rng.normal(spec.mean, spec.sd, size)
    outside = (values < spec.minimum) | (values > spec.maximum)
    tries = 1
    while outside.any() and tries < RESAMPLE_TRIES:
        values[outside] = rng.normal(spec.mean, spec.sd, int(outside.sum()))
        outside = (values < spec.minimum) | (values > spec.maximum)
        tries += 1
    return np.clip(values, spec.minimum, spec.maximum)


def _generate_directory(directory: ComponentDirectory, config: GeneratorConfig,
                        seed_sequence: np.random.SeedSequence) -> list[PlacementRecord]:
    rng = np.random.default_rng(seed_sequence)
    n = config.records_per_type
    columns = {name: sample_truncated_normal(rng, config.ranges[name], n)
               for name in PASTE_FIELDS + PLACEMENT_FIELDS}
    records = []
    for k in range(n):
        paste = PasteState(*(float(columns[name][k]) for name in PASTE_FIELDS))
        placement = PlacementSetting(*(float(columns[name][k]) for name in PLACEMENT_FIELDS))
        record = PlacementRecord(directory, paste, placement)
        targets = simulate_reflow(record, config.oracle, rng)
        records.append(PlacementRecord(directory, paste, placement, targets))
    return records


def generate_dataset(config: GeneratorConfig) -> list[PlacementRecord]:
    """
    Generate records_per_type labeled records per directory, ordered by directory then index.
    Each directory draws from its own stream spawned from the seed.
    """
    streams = np.random.SeedSequence(config.seed).spawn(len(config.directories))
    jobs = list(zip(config.directories, streams))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(lambda job: _generate_directory(job[0], config, job[1]), jobs))
    else:
        parts = [_generate_directory(directory, config, stream) for directory, stream in jobs]
    records = [record for part in parts for record in part]
    logger.info("Generated %d records for %d directories (seed %d)",
                len(records), len(config.directories), config.seed)
    return records


def sample_contexts(records: list[PlacementRecord], records_per_type: int) -> list[PlacementRecord]:
    """First record of each directory block, without targets: one optimization context per directory."""
    return [records[start].unlabeled() for start in range(0, len(records), records_per_type)]
