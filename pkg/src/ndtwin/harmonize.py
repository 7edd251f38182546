"""Harmonization layer: canonical metric mapping, per-regime anomaly
trimming, regime-aware feature construction, and OOD dataset assembly.

The 7 model features normalize demand-side raw metrics by the active pod
count so that proportionally loaded regimes map to the same point in
feature space; the latency target is stabilized as ln(1 + y).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .simcluster import RegimeKey, TelemetryRecord
from .telemetry import TelemetryStore

FEATURE_NAMES = (
    "workload_intensity",
    "congestion_index",
    "backlog_flow",
    "cpu_process_pct",
    "cpu_system_pct",
    "mem_system_pct",
    "pods",
)

DATASET_COLUMNS = FEATURE_NAMES + ("log_target", "users", "pods_key")


class HarmonizeError(Exception):
    pass


class UnmappedMetricError(HarmonizeError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__(f"unmapped metrics: {', '.join(self.names)}")


class EmptyRegimeError(HarmonizeError):
    pass


class MissingRegimeError(HarmonizeError):
    def __init__(self, keys):
        self.keys = sorted(keys)
        super().__init__(f"regimes absent from store: {self.keys}")


@dataclass(frozen=True)
class MetricMapping:
    """raw metric name -> (canonical name, unit, multiplicative scale)."""

    entries: dict

    def __post_init__(self):
        canon = [c for c, _, _ in self.entries.values()]
        if len(set(canon)) != len(canon):
            raise ValueError("canonical names must be unique")
        for raw, (_, _, scale) in self.entries.items():
            if scale <= 0:
                raise ValueError(f"scale for {raw} must be > 0")

    @classmethod
    def identity(cls, names) -> "MetricMapping":
        return cls({n: (n, "raw", 1.0) for n in names})


@dataclass
class ComputeElementModel:
    """Lightweight canonical compute-element model (container/VM analog)."""

    id: str
    attributes: dict
    measurements: list = field(default_factory=list)
    type: str = "CE"

    def __post_init__(self):
        for name, v in self.attributes.items():
            if v < 0:
                raise ValueError(f"attribute {name} must be nonnegative")


@dataclass(frozen=True)
class FeatureVector:
    workload_intensity: float
    congestion_index: float
    backlog_flow: float
    cpu_process_pct: float
    cpu_system_pct: float
    mem_system_pct: float
    pods: float

    def __post_init__(self):
        for name in FEATURE_NAMES:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"feature {name} is not finite")
        if self.pods < 1:
            raise ValueError("pods feature must be >= 1")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class SplitSpec:
    train_regimes: frozenset
    test_regimes: frozenset

    def __post_init__(self):
        overlap = self.train_regimes & self.test_regimes
        if overlap:
            raise ValueError(f"train/test regimes overlap: {sorted(overlap)}")

    @classmethod
    def from_user_levels(cls, train_users, test_users, pods, test_pods=None):
        test_pods = pods if test_pods is None else test_pods
        return cls(
            train_regimes=frozenset(
                RegimeKey(u, p) for u in train_users for p in pods
            ),
            test_regimes=frozenset(
                RegimeKey(u, p) for u in test_users for p in test_pods
            ),
        )


@dataclass(frozen=True)
class PercentileTrim:
    low_p: float = 1.0
    high_p: float = 99.0

    def __post_init__(self):
        if not 0 <= self.low_p < self.high_p <= 100:
            raise ValueError("need 0 <= low_p < high_p <= 100")

    def describe(self) -> dict:
        return {"method": "percentile", "low_p": self.low_p, "high_p": self.high_p}

    def interval(self, values: np.ndarray) -> tuple:
        s = np.sort(values)
        n = len(s)
        # upper cutoff: nearest-rank; lower cutoff: reflected nearest-rank,
        # so (1, 99) trims the same count from each tail
        hi_rank = min(n, math.ceil(self.high_p / 100.0 * n))
        lo_rank = max(1, n - math.ceil((100.0 - self.low_p) / 100.0 * n) + 1)
        return float(s[lo_rank - 1]), float(s[hi_rank - 1])


@dataclass(frozen=True)
class IqrTrim:
    k: float = 1.5

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")

    def describe(self) -> dict:
        return {"method": "iqr", "k": self.k}

    def interval(self, values: np.ndarray) -> tuple:
        s = np.sort(values)
        n = len(s)
        q1 = float(s[max(1, math.ceil(0.25 * n)) - 1])
        q3 = float(s[max(1, math.ceil(0.75 * n)) - 1])
        iqr = q3 - q1
        return q1 - self.k * iqr, q3 + self.k * iqr


TrimMethod = Union[PercentileTrim, IqrTrim]


@dataclass
class TrimResult:
    kept: list
    removed: int
    no_latency: int
    interval: tuple


def map_to_canonical(record: TelemetryRecord, mapping: MetricMapping) -> dict:
    """Rescale and rename raw record fields into the canonical schema."""
    rec_dict = record.to_dict()
    unmapped = [k for k in rec_dict if k not in mapping.entries]
    if unmapped:
        raise UnmappedMetricError(unmapped)
    out = {}
    for k, v in rec_dict.items():
        canonical, _unit, scale = mapping.entries[k]
        out[canonical] = v * scale if isinstance(v, (int, float)) else v
    return out


def trim_regime(
    records: Sequence[TelemetryRecord], method: TrimMethod
) -> TrimResult:
    """Per-regime outlier removal on the latency target.

    Records without a latency sample are dropped up front and counted
    separately; the trim interval is closed on both ends.
    """
    regimes = {r.regime for r in records}
    if len(regimes) > 1:
        raise ValueError(f"records span multiple regimes: {sorted(regimes)}")
    with_latency = [r for r in records if r.avg_total_infer_ms is not None]
    no_latency = len(records) - len(with_latency)
    if not with_latency:
        raise EmptyRegimeError("no latency-bearing records in regime")
    values = np.array([r.avg_total_infer_ms for r in with_latency])
    lo, hi = method.interval(values)
    kept = [r for r in with_latency if lo <= r.avg_total_infer_ms <= hi]
    return TrimResult(
        kept=kept,
        removed=len(with_latency) - len(kept),
        no_latency=no_latency,
        interval=(lo, hi),
    )


def build_features(record: TelemetryRecord) -> FeatureVector:
    if record.pods < 1:
        raise ValueError(f"pods must be >= 1, got {record.pods}")
    pods = float(record.pods)
    return FeatureVector(
        workload_intensity=record.current_users / pods,
        congestion_index=record.avg_depth_on_enqueue / pods,
        backlog_flow=record.avg_backlog_sec_est / pods,
        cpu_process_pct=record.avg_cpu_process_pct,
        cpu_system_pct=record.avg_cpu_system_pct,
        mem_system_pct=record.avg_mem_system_pct,
        pods=pods,
    )


def transform_target(y_ms: float) -> float:
    if y_ms < 0:
        raise ValueError(f"latency must be >= 0, got {y_ms}")
    return math.log1p(y_ms)


def invert_target(yp: float) -> float:
    if yp < 0:
        raise ValueError(f"log-space value must be >= 0, got {yp}")
    return math.expm1(yp)


@dataclass
class RefinedDataset:
    """Feature matrix plus log target, regime labels, and raw-record refs."""

    features: np.ndarray  # (n, 7) in FEATURE_NAMES order
    log_target: np.ndarray  # (n,)
    users: np.ndarray  # (n,) int
    pods: np.ndarray  # (n,) int
    raw: list  # n TelemetryRecord references
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.log_target)

    @property
    def target_ms(self) -> np.ndarray:
        return np.expm1(self.log_target)

    def regime_keys(self) -> set:
        return {RegimeKey(int(u), int(p)) for u, p in zip(self.users, self.pods)}

    @classmethod
    def from_records(cls, records, provenance=None) -> "RefinedDataset":
        feats, targets, users, pods = [], [], [], []
        for rec in records:
            if rec.avg_total_infer_ms is None:
                continue
            feats.append(build_features(rec).as_array())
            targets.append(transform_target(rec.avg_total_infer_ms))
            users.append(rec.current_users)
            pods.append(rec.pods)
        return cls(
            features=np.array(feats, dtype=np.float64).reshape(len(feats), 7),
            log_target=np.array(targets, dtype=np.float64),
            users=np.array(users, dtype=np.int64),
            pods=np.array(pods, dtype=np.int64),
            raw=[r for r in records if r.avg_total_infer_ms is not None],
            provenance=provenance or {},
        )


def assemble(
    store: TelemetryStore, split: SplitSpec, method: TrimMethod
) -> tuple:
    """Trim each regime, build features, and split into train/test datasets."""
    available = set(store.regimes())
    wanted = set(split.train_regimes) | set(split.test_regimes)
    missing = wanted - available
    if missing:
        raise MissingRegimeError(missing)

    def collect(keys):
        records = []
        trim_stats = {}
        for key in sorted(keys):
            result = trim_regime(store.query(regime=key), method)
            records.extend(result.kept)
            trim_stats[key.label()] = {
                "kept": len(result.kept),
                "removed": result.removed,
                "no_latency": result.no_latency,
            }
        return records, trim_stats

    train_records, train_stats = collect(split.train_regimes)
    test_records, test_stats = collect(split.test_regimes)
    base = {
        "store": str(store.root),
        "trim": method.describe(),
        "target_transform": "log1p",
    }
    train = RefinedDataset.from_records(
        train_records, provenance={**base, "role": "train", "regimes": train_stats}
    )
    test = RefinedDataset.from_records(
        test_records, provenance={**base, "role": "test", "regimes": test_stats}
    ) if test_records else RefinedDataset(
        features=np.zeros((0, 7)),
        log_target=np.zeros(0),
        users=np.zeros(0, dtype=np.int64),
        pods=np.zeros(0, dtype=np.int64),
        raw=[],
        provenance={**base, "role": "test", "regimes": test_stats},
    )
    return train, test


def save_dataset(ds: RefinedDataset, directory, name: str) -> Path:
    """Write <name>.csv with the 7 feature columns plus target/regime labels,
    and a <name>.provenance.json sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name}.csv"
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(FEATURE_NAMES + ("log_target", "users", "pods"))
        for i in range(len(ds)):
            writer.writerow(
                [repr(float(v)) for v in ds.features[i]]
                + [repr(float(ds.log_target[i])), int(ds.users[i]), int(ds.pods[i])]
            )
    sidecar = directory / f"{name}.provenance.json"
    sidecar.write_text(json.dumps(ds.provenance, indent=2, sort_keys=True))
    return path


def load_dataset(directory, name: str) -> RefinedDataset:
    directory = Path(directory)
    path = directory / f"{name}.csv"
    feats, targets, users, pods = [], [], [], []
    with path.open() as f:
        reader = csv.DictReader(f)
        for row in reader:
            feats.append([float(row[n]) for n in FEATURE_NAMES])
            targets.append(float(row["log_target"]))
            users.append(int(row["users"]))
            pods.append(int(row["pods"]))
    sidecar = directory / f"{name}.provenance.json"
    provenance = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return RefinedDataset(
        features=np.array(feats, dtype=np.float64).reshape(len(feats), 7),
        log_target=np.array(targets, dtype=np.float64),
        users=np.array(users, dtype=np.int64),
        pods=np.array(pods, dtype=np.int64),
        raw=[],
        provenance=provenance,
    )
