"""Model evaluation in millisecond space: aggregate, per-regime, and tail
metrics plus the quality grade."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from ..simcluster import RegimeKey
from .common import ModelError, TrainedModel, predict_batch_ms


class InsufficientTailSamplesError(ModelError):
    pass


class ZeroVarianceTargetError(ModelError):
    pass


@dataclass(frozen=True)
class GradeBounds:
    mae_abs_ms: float
    mae_rel: float
    p95_abs_ms: float
    p95_rel: float


DEFAULT_GRADE_BOUNDS = {
    "Excellent": GradeBounds(50.0, 0.10, 150.0, 0.25),
    "Good": GradeBounds(100.0, 0.15, 300.0, 0.40),
}


@dataclass
class EvalReport:
    mae_ms: float
    rmse_ms: float
    r2: Optional[float]
    p95_abs_err_ms: float
    mean_true_ms: float
    n_samples: int
    per_regime: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)
    grade: str = "Weak"
    r2_defined: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def nearest_rank(values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    s = np.sort(np.asarray(values))
    n = len(s)
    if n == 0:
        raise ValueError("empty sample")
    rank = min(n, max(1, math.ceil(p / 100.0 * n)))
    return float(s[rank - 1])


def _metrics(y_true: np.ndarray, y_pred: np.ndarray) -> dict:
    err = y_pred - y_true
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    sse = float(np.sum(err**2))
    if sst == 0.0:
        r2 = 1.0 if sse == 0.0 else None
    else:
        r2 = 1.0 - sse / sst
    return {
        "mae_ms": mae,
        "rmse_ms": rmse,
        "r2": r2,
        "p95_abs_err_ms": nearest_rank(np.abs(err), 95.0),
    }


def grade_quality(
    mae_ms: float,
    p95_abs_err_ms: float,
    mean_true_latency_ms: float,
    bounds: dict = DEFAULT_GRADE_BOUNDS,
) -> str:
    """Best grade whose MAE and P95 criteria both hold; each criterion is
    satisfied by its absolute OR its relative bound (bounds inclusive)."""
    if mean_true_latency_ms <= 0:
        raise ValueError("mean_true_latency_ms must be > 0")
    for grade in ("Excellent", "Good"):
        b = bounds[grade]
        mae_ok = mae_ms <= b.mae_abs_ms or mae_ms / mean_true_latency_ms <= b.mae_rel
        p95_ok = (
            p95_abs_err_ms <= b.p95_abs_ms
            or p95_abs_err_ms / mean_true_latency_ms <= b.p95_rel
        )
        if mae_ok and p95_ok:
            return grade
    return "Weak"


def tail_eval(
    model: TrainedModel, test, threshold: str, min_samples: int = 20
) -> dict:
    """Metrics restricted to rows whose true latency exceeds the P90/P95 of
    the true test latency."""
    if threshold not in ("P90", "P95"):
        raise ValueError("threshold must be 'P90' or 'P95'")
    y_true = test.target_ms
    cutoff = nearest_rank(y_true, float(threshold[1:]))
    mask = y_true > cutoff
    count = int(mask.sum())
    if count < min_samples:
        raise InsufficientTailSamplesError(
            f"{count} samples above {threshold} cutoff, need >= {min_samples}"
        )
    y_pred = predict_batch_ms(model, test.features[mask])
    m = _metrics(y_true[mask], y_pred)
    return {"count": count, **m}


def evaluate(model: TrainedModel, test, bounds: dict = DEFAULT_GRADE_BOUNDS) -> EvalReport:
    if len(test) == 0:
        raise ModelError("test dataset is empty")
    y_true = test.target_ms
    y_pred = predict_batch_ms(model, test.features)
    agg = _metrics(y_true, y_pred)

    per_regime = {}
    for key in sorted(test.regime_keys()):
        mask = (test.users == key.users) & (test.pods == key.pods)
        m = _metrics(y_true[mask], y_pred[mask])
        per_regime[f"{key.users},{key.pods}"] = {"mae_ms": m["mae_ms"], "r2": m["r2"]}

    tail = {}
    for threshold in ("P90", "P95"):
        try:
            tail[threshold] = tail_eval(model, test, threshold)
        except InsufficientTailSamplesError as exc:
            tail[threshold] = {"count": 0, "insufficient": str(exc)}

    mean_true = float(y_true.mean())
    report = EvalReport(
        mae_ms=agg["mae_ms"],
        rmse_ms=agg["rmse_ms"],
        r2=agg["r2"],
        p95_abs_err_ms=agg["p95_abs_err_ms"],
        mean_true_ms=mean_true,
        n_samples=len(test),
        per_regime=per_regime,
        tail=tail,
        r2_defined=agg["r2"] is not None,
    )
    report.grade = grade_quality(
        report.mae_ms, report.p95_abs_err_ms, mean_true, bounds=bounds
    )
    return report
