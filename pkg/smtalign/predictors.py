"""
Trained per-target models, their JSON persistence and the three-target bundles used by
evaluation and optimization.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, Union

import numpy as np

from smtalign.domain import ENCODING_HASH, TARGETS, PlacementRecord, encode_matrix, target_vector
from smtalign.identifiers import ArtifactNames
from smtalign.rfr import Forest, fit_forest
from smtalign.svr import SvrModel, fit_svr
from smtalign.util import read_json, write_json

logger = logging.getLogger(__name__)

MODEL_KINDS = ("svr", "rfr")

RegressionModel = Union[SvrModel, Forest]


class EncodingMismatchError(ValueError):
    """Model file was written for a different feature encoding."""


class Predictor(Protocol):
    def predict(self, x) -> float:
        ...

    def predict_many(self, features) -> np.ndarray:
        ...


@dataclass(frozen=True)
class TrainedModel:
    kind: str
    target: str
    model: RegressionModel
    encoding_hash: str = ENCODING_HASH

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"Unknown model kind '{self.kind}', expected one of {MODEL_KINDS}")
        if self.target not in TARGETS:
            raise ValueError(f"Unknown target '{self.target}', expected one of {TARGETS}")

    def predict(self, x) -> float:
        return self.model.predict(x)

    def predict_many(self, features) -> np.ndarray:
        return self.model.predict_many(features)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target": self.target,
            "encoding_hash": self.encoding_hash,
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict, source: str = "model") -> 'TrainedModel':
        stored_hash = data.get("encoding_hash")
        if stored_hash != ENCODING_HASH:
            raise EncodingMismatchError(
                f"{source}: feature encoding {stored_hash!r} does not match this version ({ENCODING_HASH})"
            )
        kind = data["kind"]
        if kind == "svr":
            model = SvrModel.from_dict(data["model"])
        elif kind == "rfr":
            model = Forest.from_dict(data["model"])
        else:
            raise ValueError(f"{source}: unknown model kind '{kind}'")
        return cls(kind=kind, target=data["target"], model=model, encoding_hash=stored_hash)


@dataclass(frozen=True)
class ModelBundle:
    """One trained model per target, all of the same kind."""

    kind: str
    models: Mapping[str, TrainedModel]

    def __post_init__(self):
        missing = [target for target in TARGETS if target not in self.models]
        if missing:
            raise ValueError(f"{self.kind} bundle has no model for {missing[0]}")
        for target, trained in self.models.items():
            if trained.kind != self.kind or trained.target != target:
                raise ValueError(f"Bundle slot {self.kind}.{target} holds a {trained.kind}.{trained.target} model")

    def __getitem__(self, target: str) -> TrainedModel:
        return self.models[target]

    def predict_many(self, features) -> dict[str, np.ndarray]:
        return {target: self.models[target].predict_many(features) for target in TARGETS}

    def save(self, directory, names: ArtifactNames) -> list[str]:
        """Write one JSON file per target; returns the file names."""
        filenames = []
        for target in TARGETS:
            filename = names.model_filename(self.kind, target)
            write_json(Path(directory) / filename, self.models[target].to_dict())
            filenames.append(filename)
        logger.info("Saved %s models to %s", self.kind, directory)
        return filenames

    @classmethod
    def load(cls, directory, kind: str, names: ArtifactNames) -> 'ModelBundle':
        models = {}
        for target in TARGETS:
            path = Path(directory) / names.model_filename(kind, target)
            if not path.is_file():
                raise FileNotFoundError(f"Model file not found: {path}")
            trained = TrainedModel.from_dict(read_json(path), source=str(path))
            if trained.kind != kind or trained.target != target:
                raise ValueError(f"{path}: holds a {trained.kind}.{trained.target} model")
            models[target] = trained
        logger.info("Loaded %s models from %s", kind, directory)
        return cls(kind, models)


def fit_model(kind: str, target: str, features: np.ndarray, targets: np.ndarray, config) -> TrainedModel:
    """Fit one model; config is an SvrConfig for 'svr' and an RfrConfig for 'rfr'."""
    if kind == "svr":
        model = fit_svr(features, targets, config)
    elif kind == "rfr":
        model = fit_forest(features, targets, config)
    else:
        raise ValueError(f"Unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    return TrainedModel(kind=kind, target=target, model=model)


def fit_bundle(kind: str, records: Sequence[PlacementRecord], configs: Mapping[str, object],
               workers: int = 1) -> ModelBundle:
    """Fit one model per target on the labeled records; configs maps target to model config."""
    features = encode_matrix(records)
    jobs = [(target, target_vector(records, target)) for target in TARGETS]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(lambda job: fit_model(kind, job[0], features, job[1], configs[job[0]]), jobs))
    else:
        fitted = [fit_model(kind, target, features, y, configs[target]) for target, y in jobs]
    return ModelBundle(kind, {trained.target: trained for trained in fitted})
