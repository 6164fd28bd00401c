"""
Metrics and the benchmark protocol: split 70:10:20, fit SVR and RFR per target on the training
set, report R^2 on the training set next to RMSE on the test set.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from smtalign.config import Config, ConfigError, build_config
from smtalign.domain import (
    FEATURE_DIM, TARGETS, DatasetSplit, PlacementRecord, encode_matrix, split_dataset, target_vector,
)
from smtalign.identifiers import ArtifactNames
from smtalign.predictors import MODEL_KINDS, ModelBundle, fit_bundle
from smtalign.rfr import RfrConfig
from smtalign.svr import SvrConfig
from smtalign.util import write_json

logger = logging.getLogger(__name__)

# Values published for the measured line, shown next to synthetic results: (RMSE test, R^2 train).
REFERENCE_VALUES = {
    ("svr", "post_x"): (18.32, 0.38),
    ("svr", "post_y"): (16.65, 0.42),
    ("svr", "post_theta"): (1.61, 0.02),
    ("rfr", "post_x"): (15.48, 0.94),
    ("rfr", "post_y"): (12.63, 0.95),
    ("rfr", "post_theta"): (1.56, 0.87),
}

TARGET_UNITS = {"post_x": "um", "post_y": "um", "post_theta": "deg"}

SvrSettings = Union[SvrConfig, Mapping[str, SvrConfig]]


class MetricError(ValueError):
    pass


def _paired(predictions, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if len(p) != len(t):
        raise MetricError(f"Length mismatch: {len(p)} predictions, {len(t)} truth values")
    return p, t


def rmse(predictions, truth) -> float:
    p, t = _paired(predictions, truth)
    if len(p) == 0:
        raise MetricError("RMSE of an empty sample is undefined")
    return math.sqrt(float(np.mean((p - t) ** 2)))


def r_squared(predictions, truth) -> float:
    """1 - SS_res / SS_tot, with SS_tot taken about the mean of truth."""
    p, t = _paired(predictions, truth)
    if len(p) < 2:
        raise MetricError(f"R^2 needs at least 2 values, got {len(p)}")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise MetricError("R^2 is undefined: truth values have zero variance")
    ss_res = float(np.sum((p - t) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class MetricRow:
    """Headline metrics (r2_train, rmse_test) plus the other two as diagnostics."""

    model: str
    target: str
    r2_train: float
    rmse_test: float
    rmse_train: float
    r2_test: Optional[float]


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[MetricRow, ...]
    split_sizes: tuple[int, int, int]
    seed: int
    configs: Mapping[str, Any] = field(default_factory=dict)
    residuals: Optional[pd.DataFrame] = field(default=None, repr=False, compare=False)

    def row(self, model: str, target: str) -> MetricRow:
        for row in self.rows:
            if row.model == model and row.target == target:
                return row
        raise KeyError(f"No report row for {model}.{target}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "split_sizes": {"train": self.split_sizes[0], "validation": self.split_sizes[1],
                            "test": self.split_sizes[2]},
            "configs": dict(self.configs),
            "rows": [asdict(row) for row in self.rows],
        }

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            reference = REFERENCE_VALUES.get((row.model, row.target), (None, None))
            records.append({
                "model": row.model.upper(),
                "target": row.target,
                "unit": TARGET_UNITS[row.target],
                "rmse_test": row.rmse_test,
                "r2_train": row.r2_train,
                "ref_rmse": reference[0],
                "ref_r2": reference[1],
            })
        return pd.DataFrame(records, columns=["model", "target", "unit", "rmse_test", "r2_train",
                                              "ref_rmse", "ref_r2"])

    def to_text(self) -> str:
        """Aligned table, one row per model and target, with the published values alongside."""
        n_train, n_validation, n_test = self.split_sizes
        header = (f"Split (seed {self.seed}): train {n_train}, validation {n_validation}, test {n_test}\n"
                  f"ref_* columns: published values for the measured line, for display only\n\n")
        table = self.to_frame().to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-")
        return header + table + "\n"

    def write(self, directory, names: ArtifactNames) -> list[str]:
        """Write the JSON report, the text table and (when present) the residuals CSV."""
        directory = Path(directory)
        written = [names.report_json_filename, names.report_text_filename]
        write_json(directory / names.report_json_filename, self.to_dict())
        (directory / names.report_text_filename).write_text(self.to_text(), encoding="utf-8")
        if self.residuals is not None:
            self.residuals.to_csv(directory / names.residuals_filename, index=False)
            written.append(names.residuals_filename)
        logger.info("Wrote evaluation report to %s", directory)
        return written


def svr_configs_by_target(settings: SvrSettings) -> dict[str, SvrConfig]:
    if isinstance(settings, SvrConfig):
        return {target: settings for target in TARGETS}
    return {target: settings[target] for target in TARGETS}


def model_configs(kind: str, svr_config: SvrSettings, rfr_config: Mapping[str, RfrConfig] | RfrConfig,
                  seed: int) -> dict[str, Any]:
    """Per-target configs of one model kind; forests take the run seed."""
    if kind == "svr":
        return svr_configs_by_target(svr_config)
    if isinstance(rfr_config, RfrConfig):
        rfr_config = {target: rfr_config for target in TARGETS}
    return {target: replace(rfr_config[target], seed=seed) for target in TARGETS}


def configs_echo(configs: Mapping[str, Mapping[str, Any]]) -> dict:
    return {kind: {target: asdict(config) for target, config in by_target.items()}
            for kind, by_target in configs.items()}


def residual_frame(bundle: ModelBundle, records: Sequence[PlacementRecord], indices: Sequence[int],
                   split_name: str) -> pd.DataFrame:
    """Per-record truth, prediction and residual for every target."""
    features = encode_matrix(records)
    predictions = bundle.predict_many(features)
    parts = []
    for target in TARGETS:
        truth = target_vector(records, target)
        parts.append(pd.DataFrame({
            "model": bundle.kind,
            "split": split_name,
            "record": list(indices),
            "target": target,
            "truth": truth,
            "prediction": predictions[target],
            "residual": predictions[target] - truth,
        }))
    return pd.concat(parts, ignore_index=True)


def evaluate_models(bundles: Sequence[ModelBundle], split: DatasetSplit, seed: int,
                    configs: Optional[Mapping[str, Any]] = None) -> EvalReport:
    """Score fitted bundles on a split: R^2 and RMSE on train and test for each target."""
    train_features = encode_matrix(split.train)
    test_features = encode_matrix(split.test)
    rows, residuals = [], []
    for bundle in bundles:
        train_predictions = bundle.predict_many(train_features)
        test_predictions = bundle.predict_many(test_features)
        for target in TARGETS:
            train_truth = target_vector(split.train, target)
            test_truth = target_vector(split.test, target)
            try:
                r2_test = r_squared(test_predictions[target], test_truth)
            except MetricError:
                r2_test = None
            row = MetricRow(
                model=bundle.kind,
                target=target,
                r2_train=r_squared(train_predictions[target], train_truth),
                rmse_test=rmse(test_predictions[target], test_truth),
                rmse_train=rmse(train_predictions[target], train_truth),
                r2_test=r2_test,
            )
            logger.info("%s %s: R2 train %.4f, RMSE test %.4f (diagnostic: RMSE train %.4f, R2 test %s)",
                        row.model, row.target, row.r2_train, row.rmse_test, row.rmse_train,
                        "n/a" if r2_test is None else f"{r2_test:.4f}")
            rows.append(row)
        residuals.append(residual_frame(bundle, split.test, split.test_index or range(len(split.test)), "test"))
    return EvalReport(
        rows=tuple(rows),
        split_sizes=split.sizes,
        seed=seed,
        configs=dict(configs or {}),
        residuals=pd.concat(residuals, ignore_index=True) if residuals else None,
    )


def run_benchmark(records: Sequence[PlacementRecord], svr_config: SvrSettings, rfr_config: RfrConfig,
                  seed: int, kinds: Sequence[str] = MODEL_KINDS,
                  workers: int = 1) -> tuple[EvalReport, dict[str, ModelBundle]]:
    """Split with the seed, fit every kind on the training set and evaluate; returns report and bundles."""
    split = split_dataset(records, seed)
    configs = {kind: model_configs(kind, svr_config, rfr_config, seed) for kind in kinds}
    bundles = {kind: fit_bundle(kind, split.train, configs[kind], workers) for kind in kinds}
    report = evaluate_models([bundles[kind] for kind in kinds], split, seed, configs_echo(configs))
    return report, bundles


def default_mtry_candidates(dim: int = FEATURE_DIM) -> list[int]:
    return sorted({math.ceil(dim / 3), math.ceil(dim / 2), dim})


def tune_mtry(split: DatasetSplit, rfr_config: RfrConfig, seed: int,
              candidates: Optional[Sequence[int]] = None,
              workers: int = 1) -> tuple[dict[str, RfrConfig], dict[str, dict[int, float]]]:
    """
    Fit forests for each candidate mtry and keep, per target, the value with the lowest
    validation RMSE (the smaller mtry on ties). Returns the chosen configs and all scores.
    """
    candidates = sorted(set(candidates or default_mtry_candidates()))
    if not split.validation:
        raise ValueError("Tuning needs a non-empty validation set")
    validation_features = encode_matrix(split.validation)
    scores: dict[str, dict[int, float]] = {target: {} for target in TARGETS}
    for mtry in candidates:
        configs = model_configs("rfr", SvrConfig(), replace(rfr_config, mtry=mtry), seed)
        bundle = fit_bundle("rfr", split.train, configs, workers)
        predictions = bundle.predict_many(validation_features)
        for target in TARGETS:
            scores[target][mtry] = rmse(predictions[target], target_vector(split.validation, target))
    chosen = {}
    for target in TARGETS:
        best = min(candidates, key=lambda m: (scores[target][m], m))
        chosen[target] = replace(rfr_config, mtry=best, seed=seed)
        logger.info("Tuned mtry for %s: %d (validation RMSE %.4f)", target, best, scores[target][best])
    return chosen, scores


def load_model_settings(config: Config) -> tuple[dict[str, SvrConfig], RfrConfig]:
    """
    SVR and RFR settings from config. The `svr` section may hold a `per_target` block
    overriding any SVR field for one target.
    """
    svr_section = config.section('svr')
    per_target = svr_section.pop('per_target', None) or {}
    unknown = sorted(set(per_target) - set(TARGETS))
    if unknown:
        raise ConfigError(f"svr.per_target.{unknown[0]}: unknown target")
    svr_configs = {
        target: build_config(SvrConfig, {**svr_section, **(per_target.get(target) or {})},
                             f"svr.per_target.{target}" if target in per_target else "svr")
        for target in TARGETS
    }
    rfr_config = build_config(RfrConfig, config.section('rfr'), "rfr")
    return svr_configs, rfr_config
