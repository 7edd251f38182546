"""Counterfactual what-if engine and trust metrics.

Builds matched pairs across a regime transition (nearest neighbor on
standardized nuisance features, with replacement, under a caliper),
computes predicted vs observed latency deltas, Sign Agreement, the
directional-sensitivity class, and the qualitative deployment grade.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .harmonize import (
    FEATURE_NAMES,
    FeatureVector,
    PercentileTrim,
    RefinedDataset,
    TrimMethod,
    build_features,
    trim_regime,
)
from .models.common import TrainedModel, predict_batch_ms
from .models.evaluate import nearest_rank
from .simcluster import RegimeKey, TelemetryRecord
from .telemetry import TelemetryStore

NUISANCE_CHOICES = ("cpu_process_pct", "cpu_system_pct", "mem_system_pct")

SENSITIVITY_HIGH_MIN = 0.85
SENSITIVITY_LOW_MIN = 0.55


class WhatIfError(Exception):
    pass


class InvalidTransitionError(WhatIfError):
    pass


class InsufficientPairsError(WhatIfError):
    def __init__(self, achieved: int, required: int):
        self.achieved = achieved
        self.required = required
        super().__init__(f"only {achieved} matched pairs, need >= {required}")


class AllPairsTiedError(WhatIfError):
    pass


@dataclass(frozen=True)
class Transition:
    from_key: RegimeKey
    to_key: RegimeKey
    kind: str  # "pods+1" | "pods-1" | "users:N"

    def __post_init__(self):
        m = re.fullmatch(r"pods([+-]1)|users:(\d+)", self.kind)
        if not m:
            raise InvalidTransitionError(f"unknown transition kind {self.kind!r}")
        if m.group(1) is not None:
            delta = int(m.group(1))
            if self.to_key.pods != self.from_key.pods + delta:
                raise InvalidTransitionError("to.pods inconsistent with pod delta")
            if self.to_key.users != self.from_key.users:
                raise InvalidTransitionError("pod delta must keep users fixed")
        else:
            target = int(m.group(2))
            if self.to_key.users != target:
                raise InvalidTransitionError("to.users inconsistent with user shift")
            if self.to_key.pods != self.from_key.pods:
                raise InvalidTransitionError("user shift must keep pods fixed")

    @classmethod
    def pod_delta(cls, from_key: RegimeKey, delta: int) -> "Transition":
        if delta not in (-1, 1):
            raise InvalidTransitionError("pod delta must be +1 or -1")
        if from_key.pods + delta < 1:
            raise InvalidTransitionError("transition would drop pods below 1")
        return cls(
            from_key=from_key,
            to_key=RegimeKey(from_key.users, from_key.pods + delta),
            kind=f"pods{delta:+d}",
        )

    @classmethod
    def user_shift(cls, from_key: RegimeKey, target_users: int) -> "Transition":
        return cls(
            from_key=from_key,
            to_key=RegimeKey(target_users, from_key.pods),
            kind=f"users:{target_users}",
        )

    @classmethod
    def from_action(cls, from_key: RegimeKey, action: str) -> "Transition":
        if action == "pods+1":
            return cls.pod_delta(from_key, +1)
        if action == "pods-1":
            return cls.pod_delta(from_key, -1)
        m = re.fullmatch(r"users:(\d+)", action)
        if m:
            return cls.user_shift(from_key, int(m.group(1)))
        raise InvalidTransitionError(f"unknown action {action!r}")


@dataclass(frozen=True)
class PairingConfig:
    nuisance_features: tuple = NUISANCE_CHOICES
    caliper: float = 0.5
    epsilon_tie_ms: float = 0.5
    min_pairs: int = 30

    def __post_init__(self):
        unknown = set(self.nuisance_features) - set(NUISANCE_CHOICES)
        if unknown or not self.nuisance_features:
            raise ValueError(f"nuisance_features must be a nonempty subset of {NUISANCE_CHOICES}")
        if self.caliper <= 0:
            raise ValueError("caliper must be > 0")
        if self.epsilon_tie_ms < 0:
            raise ValueError("epsilon_tie_ms must be >= 0")
        if self.min_pairs < 1:
            raise ValueError("min_pairs must be >= 1")


@dataclass(frozen=True)
class MatchedPair:
    index_a: int
    index_b: int
    nuisance_distance: float
    delta_true_ms: float


@dataclass
class CounterfactualReport:
    from_regime: str
    to_regime: str
    action: str
    n_pairs: int
    mean_delta_pred_ms: Optional[float]
    median_delta_pred_ms: Optional[float]
    p95_abs_delta_ms: Optional[float]
    mean_delta_true_ms: Optional[float]
    sign_agreement: Optional[float]
    mae_delta_ms: Optional[float]
    sensitivity: Optional[str]
    deployment_grade: str
    degenerate: bool = False
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def report_id(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]


def _nuisance_matrix(ds: RefinedDataset, names) -> np.ndarray:
    idx = [FEATURE_NAMES.index(n) for n in names]
    return ds.features[:, idx]


def build_matched_pairs(
    rows_from: RefinedDataset, rows_to: RefinedDataset, cfg: PairingConfig
) -> list:
    """Nearest-neighbor matching with replacement over standardized
    nuisance features; pairs beyond the caliper are discarded."""
    if len(rows_from) == 0 or len(rows_to) == 0:
        raise WhatIfError("both regimes must contribute rows")
    a = _nuisance_matrix(rows_from, cfg.nuisance_features)
    b = _nuisance_matrix(rows_to, cfg.nuisance_features)
    combined = np.vstack([a, b])
    mean = combined.mean(axis=0)
    std = combined.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    a_s = (a - mean) / std
    b_s = (b - mean) / std

    pairs = []
    chunk = 512
    for start in range(0, len(a_s), chunk):
        block = a_s[start : start + chunk]
        d2 = ((block[:, None, :] - b_s[None, :, :]) ** 2).sum(axis=2)
        nn = np.argmin(d2, axis=1)
        dist = np.sqrt(d2[np.arange(len(block)), nn])
        for i, (j, d) in enumerate(zip(nn, dist)):
            if d <= cfg.caliper:
                ia = start + i
                ib = int(j)
                pairs.append(
                    MatchedPair(
                        index_a=ia,
                        index_b=ib,
                        nuisance_distance=float(d),
                        delta_true_ms=float(
                            rows_to.target_ms[ib] - rows_from.target_ms[ia]
                        ),
                    )
                )
    if len(pairs) < cfg.min_pairs:
        raise InsufficientPairsError(len(pairs), cfg.min_pairs)
    return pairs


def counterfactual_features(record: TelemetryRecord, t: Transition) -> FeatureVector:
    """Perturb the configuration side of a raw record and rebuild features.

    Pod deltas renormalize the demand-side metrics by the new pod count;
    user shifts replace the demand level only. CPU and memory signals are
    held fixed in both cases.
    """
    base = build_features(record)
    if t.kind.startswith("pods"):
        new_pods = record.pods + int(t.kind[4:])
        if new_pods < 1:
            raise InvalidTransitionError("transition would drop pods below 1")
        return FeatureVector(
            workload_intensity=record.current_users / new_pods,
            congestion_index=record.avg_depth_on_enqueue / new_pods,
            backlog_flow=record.avg_backlog_sec_est / new_pods,
            cpu_process_pct=base.cpu_process_pct,
            cpu_system_pct=base.cpu_system_pct,
            mem_system_pct=base.mem_system_pct,
            pods=float(new_pods),
        )
    target_users = int(t.kind.split(":")[1])
    return FeatureVector(
        workload_intensity=target_users / record.pods,
        congestion_index=base.congestion_index,
        backlog_flow=base.backlog_flow,
        cpu_process_pct=base.cpu_process_pct,
        cpu_system_pct=base.cpu_system_pct,
        mem_system_pct=base.mem_system_pct,
        pods=base.pods,
    )


def predict_delta(model: TrainedModel, record: TelemetryRecord, t: Transition) -> float:
    """Predicted latency change (ms) for applying the transition to one sample."""
    x0 = build_features(record).as_array().reshape(1, -1)
    x1 = counterfactual_features(record, t).as_array().reshape(1, -1)
    p = predict_batch_ms(model, np.vstack([x0, x1]))
    return float(p[1] - p[0])


def _sign(v: float, eps: float) -> int:
    if abs(v) < eps:
        return 0
    return 1 if v > 0 else -1


def sign_agreement(
    delta_true: Sequence[float],
    delta_pred: Sequence[float],
    epsilon_tie_ms: float = 0.5,
) -> float:
    """Fraction of non-tied pairs whose predicted delta has the true sign.

    Pairs with |true delta| below the tie threshold are excluded; a
    predicted |delta| below the threshold counts as sign zero.
    """
    delta_true = np.asarray(delta_true, dtype=np.float64)
    delta_pred = np.asarray(delta_pred, dtype=np.float64)
    if len(delta_true) != len(delta_pred):
        raise ValueError("delta arrays must have equal length")
    live = np.abs(delta_true) >= epsilon_tie_ms
    n_live = int(live.sum())
    if n_live == 0:
        raise AllPairsTiedError("every pair's true delta is below the tie threshold")
    matches = 0
    for t, p in zip(delta_true[live], delta_pred[live]):
        if _sign(t, epsilon_tie_ms) == _sign(p, epsilon_tie_ms):
            matches += 1
    return matches / n_live


def delta_metrics(delta_true: Sequence[float], delta_pred: Sequence[float]) -> dict:
    delta_true = np.asarray(delta_true, dtype=np.float64)
    delta_pred = np.asarray(delta_pred, dtype=np.float64)
    if len(delta_pred) == 0:
        raise ValueError("need at least one pair")
    return {
        "mean_delta_pred_ms": float(delta_pred.mean()),
        "median_delta_pred_ms": float(np.median(delta_pred)),
        "p95_abs_delta_ms": nearest_rank(np.abs(delta_pred), 95.0),
        "mean_delta_true_ms": float(delta_true.mean()),
        "mae_delta_ms": float(np.mean(np.abs(delta_pred - delta_true))),
    }


def classify_sensitivity(sa: float) -> str:
    if not 0.0 <= sa <= 1.0:
        raise ValueError(f"sign agreement must be in [0, 1], got {sa}")
    if sa >= SENSITIVITY_HIGH_MIN:
        return "High"
    if sa >= SENSITIVITY_LOW_MIN:
        return "Low"
    return "Negligible"


@dataclass(frozen=True)
class DeploymentBounds:
    excellent_sa: float = 0.90
    excellent_mae_ms: float = 5.0
    reliable_sa: float = 0.75
    reliable_mae_ms: float = 10.0


def deployment_grade(
    sa: float, mae_delta_ms: float, bounds: DeploymentBounds = DeploymentBounds()
) -> str:
    if not (np.isfinite(sa) and np.isfinite(mae_delta_ms)):
        raise ValueError("inputs must be finite")
    if sa >= bounds.excellent_sa and mae_delta_ms <= bounds.excellent_mae_ms:
        return "Excellent"
    if sa >= bounds.reliable_sa and mae_delta_ms <= bounds.reliable_mae_ms:
        return "Reliable"
    return "Unreliable"


def run_whatif(
    model: TrainedModel,
    store: TelemetryStore,
    transition: Transition,
    cfg: PairingConfig = PairingConfig(),
    trim: TrimMethod = PercentileTrim(),
    model_id: Optional[str] = None,
    grade_bounds: DeploymentBounds = DeploymentBounds(),
) -> CounterfactualReport:
    """Full counterfactual report for one regime transition."""

    def regime_rows(key: RegimeKey) -> RefinedDataset:
        records = store.query(regime=key)
        if not records:
            raise WhatIfError(f"regime {key.label()} absent from store")
        return RefinedDataset.from_records(trim_regime(records, trim).kept)

    rows_from = regime_rows(transition.from_key)
    rows_to = regime_rows(transition.to_key)
    pairs = build_matched_pairs(rows_from, rows_to, cfg)

    # one predicted delta per 'from' row; pairs reference rows by index
    from_idx = sorted({p.index_a for p in pairs})
    x0 = rows_from.features[from_idx]
    x1 = np.array(
        [
            counterfactual_features(rows_from.raw[i], transition).as_array()
            for i in from_idx
        ]
    )
    pred0 = predict_batch_ms(model, x0)
    pred1 = predict_batch_ms(model, x1)
    delta_by_row = {i: float(pred1[k] - pred0[k]) for k, i in enumerate(from_idx)}

    delta_true = np.array([p.delta_true_ms for p in pairs])
    delta_pred = np.array([delta_by_row[p.index_a] for p in pairs])
    metrics = delta_metrics(delta_true, delta_pred)

    degenerate = False
    try:
        sa = sign_agreement(delta_true, delta_pred, cfg.epsilon_tie_ms)
        sensitivity = classify_sensitivity(sa)
        grade = deployment_grade(sa, metrics["mae_delta_ms"], grade_bounds)
    except AllPairsTiedError:
        degenerate = True
        sa = None
        sensitivity = None
        grade = "Unreliable"

    window = [
        float(min(r.timestamp_ms for r in rows_from.raw + rows_to.raw)),
        float(max(r.timestamp_ms for r in rows_from.raw + rows_to.raw)),
    ]
    report = CounterfactualReport(
        from_regime=transition.from_key.label(),
        to_regime=transition.to_key.label(),
        action=transition.kind,
        n_pairs=len(pairs),
        mean_delta_pred_ms=metrics["mean_delta_pred_ms"],
        median_delta_pred_ms=metrics["median_delta_pred_ms"],
        p95_abs_delta_ms=metrics["p95_abs_delta_ms"],
        mean_delta_true_ms=metrics["mean_delta_true_ms"],
        sign_agreement=sa,
        mae_delta_ms=metrics["mae_delta_ms"],
        sensitivity=sensitivity,
        deployment_grade=grade,
        degenerate=degenerate,
        config={
            "nuisance_features": list(cfg.nuisance_features),
            "caliper": cfg.caliper,
            "epsilon_tie_ms": cfg.epsilon_tie_ms,
            "min_pairs": cfg.min_pairs,
            "trim": trim.describe(),
            "grade_bounds": asdict(grade_bounds),
        },
        provenance={
            "model_id": model_id,
            "store": str(store.root),
            "data_window_ms": window,
            "rows_from": len(rows_from),
            "rows_to": len(rows_to),
        },
    )
    # side channel for report rendering; not part of the serialized report
    report._pairs = pairs
    report._delta_true = delta_true
    report._delta_pred = delta_pred
    return report
