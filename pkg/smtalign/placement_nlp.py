"""
The constrained placement problem for one frozen context (directory and paste state):
minimize the predicted post-reflow distance from the pad-center reference, subject to
threshold constraints on the predicted offsets and bounds on the placement setting.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from smtalign.domain import (
    ComponentDirectory, PLACEMENT_SLOTS, TARGETS, PlacementRecord, PlacementSetting,
    encode_features,
)
from smtalign.predictors import Predictor

logger = logging.getLogger(__name__)

DECISIONS = ("x", "y", "theta")
REFERENCE = (0.0, 0.0, 0.0)

Candidate = Union[PlacementSetting, np.ndarray, tuple, list]


@dataclass(frozen=True)
class Thresholds:
    tau_theta: float
    tau_x: float
    tau_y: float

    def __post_init__(self):
        for name in ("tau_theta", "tau_x", "tau_y"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    def as_tuple(self) -> tuple[float, float, float]:
        """Thresholds in (x, y, theta) order."""
        return self.tau_x, self.tau_y, self.tau_theta


@dataclass(frozen=True)
class ThresholdSettings:
    """The `thresholds` config section; tau_x and tau_y override the pad fractions when set."""

    tau_theta: float = 2.0
    pad_length_fraction: float = 0.2
    pad_width_fraction: float = 0.2
    tau_x: Optional[float] = None
    tau_y: Optional[float] = None

    def __post_init__(self):
        if not self.pad_length_fraction > 0:
            raise ValueError(f"pad_length_fraction must be positive, got {self.pad_length_fraction}")
        if not self.pad_width_fraction > 0:
            raise ValueError(f"pad_width_fraction must be positive, got {self.pad_width_fraction}")

    def for_directory(self, directory: ComponentDirectory) -> Thresholds:
        return Thresholds(
            tau_theta=self.tau_theta,
            tau_x=self.tau_x if self.tau_x is not None else self.pad_length_fraction * directory.pad_length,
            tau_y=self.tau_y if self.tau_y is not None else self.pad_width_fraction * directory.pad_width,
        )


@dataclass(frozen=True)
class Bounds:
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def __post_init__(self):
        for name, lo, hi in zip(DECISIONS, self.lower, self.upper):
            if not lo <= hi:
                raise ValueError(f"Bound for {name}: lower {lo} exceeds upper {hi}")

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, chi) -> bool:
        chi = np.asarray(chi, dtype=np.float64)
        return bool(np.all(chi >= np.asarray(self.lower)) and np.all(chi <= np.asarray(self.upper)))

    def excess(self, chi) -> np.ndarray:
        """Per-dimension distance outside the box; zero inside."""
        chi = np.asarray(chi, dtype=np.float64)
        return np.maximum(np.asarray(self.lower) - chi, 0.0) + np.maximum(chi - np.asarray(self.upper), 0.0)

    def to_dict(self) -> dict:
        return {name: [lo, hi] for name, lo, hi in zip(DECISIONS, self.lower, self.upper)}

    @classmethod
    def from_pairs(cls, pairs) -> 'Bounds':
        """Canonicalize raw (a, b) pairs to (min, max)."""
        pairs = [(float(a), float(b)) for a, b in pairs]
        return cls(tuple(min(p) for p in pairs), tuple(max(p) for p in pairs))


def compute_bounds(context: PlacementRecord) -> Bounds:
    """
    Search box between the reference and the paste: x and y from the pad center to the paste
    centroid, theta from the reference to the paste slope in degrees. Pairs are canonicalized
    to (min, max); vertically stacked paste centers pin theta to the reference.
    """
    paste = context.paste
    ref_x, ref_y, ref_theta = REFERENCE
    centroid_x, centroid_y = paste.centroid
    dx = paste.paste_offset_x1 - paste.paste_offset_x2
    if dx == 0:
        slope = ref_theta
    else:
        slope = math.degrees(math.atan((paste.paste_offset_y1 - paste.paste_offset_y2) / dx))
    return Bounds.from_pairs([(ref_x, centroid_x), (ref_y, centroid_y), (ref_theta, slope)])


@dataclass(frozen=True)
class Verdict:
    """
    Feasibility of a candidate. Slacks are tau - |prediction| per (x, y, theta) and are None
    when the bound check already failed; worst_slack is the most negative margin.
    """

    feasible: bool
    in_bounds: bool
    bound_excess: tuple[float, float, float]
    slacks: Optional[tuple[float, float, float]]
    worst_slack: float


@dataclass(frozen=True)
class Evaluation:
    objective: float
    verdict: Verdict
    predictions: Optional[tuple[float, float, float]]


@dataclass(frozen=True)
class NlpProblem:
    context: PlacementRecord
    predictors: Mapping[str, Predictor]
    thresholds: Thresholds
    bounds: Bounds
    reference: tuple[float, float, float] = REFERENCE
    _base_features: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        missing = [target for target in TARGETS if target not in self.predictors]
        if missing:
            raise ValueError(f"No predictor for {missing[0]}")
        object.__setattr__(self, '_base_features', encode_features(self.context))

    def features(self, chi: Candidate) -> np.ndarray:
        """Context features with the placement slots set to chi."""
        values = self._base_features.copy()
        values[PLACEMENT_SLOTS] = _as_array(chi)
        return values

    def predict(self, chi: Candidate) -> tuple[float, float, float]:
        x = self.features(chi)
        return tuple(float(self.predictors[target].predict(x)) for target in TARGETS)

    def _distance(self, predictions) -> float:
        return math.hypot(self.reference[0] - predictions[0], self.reference[1] - predictions[1])

    def _slacks(self, predictions) -> tuple[float, float, float]:
        return tuple(tau - abs(p) for tau, p in zip(self.thresholds.as_tuple(), predictions))

    def evaluate(self, chi: Candidate) -> Evaluation:
        """Bounds first; predictors are called once, and only for candidates inside the box."""
        chi = _as_array(chi)
        excess = tuple(float(e) for e in self.bounds.excess(chi))
        if any(e > 0 for e in excess):
            verdict = Verdict(False, False, excess, None, -max(excess))
            return Evaluation(math.inf, verdict, None)
        predictions = self.predict(chi)
        slacks = self._slacks(predictions)
        worst = min(slacks)
        verdict = Verdict(worst >= 0, True, excess, slacks, worst)
        return Evaluation(self._distance(predictions), verdict, predictions)


def _as_array(chi: Candidate) -> np.ndarray:
    if isinstance(chi, PlacementSetting):
        return chi.as_array()
    values = np.asarray(chi, dtype=np.float64)
    if values.shape != (3,):
        raise ValueError(f"A placement setting has 3 values (x, y, theta), got shape {values.shape}")
    return values


def build_problem(context: PlacementRecord, predictors: Mapping[str, Predictor],
                  settings: Optional[ThresholdSettings] = None,
                  bounds: Optional[Bounds] = None) -> NlpProblem:
    """Problem for a context with thresholds from its directory and bounds from its paste unless given."""
    settings = settings or ThresholdSettings()
    return NlpProblem(
        context=context.unlabeled(),
        predictors=predictors,
        thresholds=settings.for_directory(context.directory),
        bounds=bounds if bounds is not None else compute_bounds(context),
    )


def objective(problem: NlpProblem, chi: Candidate) -> float:
    """Euclidean distance of the predicted (post_x, post_y) from the reference; bounds are not checked."""
    return problem._distance(problem.predict(chi))


def feasible(problem: NlpProblem, chi: Candidate) -> Verdict:
    return problem.evaluate(chi).verdict
