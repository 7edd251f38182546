"""Shared model wrapper: schema-hashed prediction in log-latency space."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..harmonize import FEATURE_NAMES, FeatureVector


class ModelError(Exception):
    pass


class EmptyDatasetError(ModelError):
    pass


class SchemaMismatchError(ModelError):
    pass


def schema_hash(feature_names) -> str:
    return hashlib.sha256(",".join(feature_names).encode()).hexdigest()


@dataclass
class TrainedModel:
    """A fitted predictor plus the feature schema it was trained against.

    `payload` is the kind-specific parameter object (GbtEnsemble / MlpNet);
    it predicts in log space, and `predict` applies the inverse target
    transform with a floor at zero milliseconds.
    """

    kind: str
    feature_names: tuple
    feature_schema_hash: str
    config: dict
    payload: object

    def check_schema(self, names) -> None:
        if schema_hash(names) != self.feature_schema_hash:
            raise SchemaMismatchError(
                f"feature schema mismatch: expected {self.feature_names}, got {tuple(names)}"
            )

    def predict_log(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatchError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}"
            )
        return self.payload.predict(X)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "feature_schema_hash": self.feature_schema_hash,
            "config": self.config,
            "payload": self.payload.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        from .gbt import GbtEnsemble
        from .mlp import MlpNet

        payload_cls = {"gbt": GbtEnsemble, "mlp": MlpNet}[d["kind"]]
        return cls(
            kind=d["kind"],
            feature_names=tuple(d["feature_names"]),
            feature_schema_hash=d["feature_schema_hash"],
            config=d["config"],
            payload=payload_cls.from_dict(d["payload"]),
        )


def predict(model: TrainedModel, features: Union[FeatureVector, np.ndarray]) -> float:
    """Point latency estimate in milliseconds (always >= 0)."""
    if isinstance(features, FeatureVector):
        model.check_schema(FEATURE_NAMES)
        x = features.as_array()
    else:
        x = np.asarray(features, dtype=np.float64)
    log_pred = float(model.predict_log(x.reshape(1, -1))[0])
    return float(np.expm1(max(log_pred, 0.0)))


def predict_batch_ms(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    log_pred = model.predict_log(X)
    return np.expm1(np.maximum(log_pred, 0.0))
