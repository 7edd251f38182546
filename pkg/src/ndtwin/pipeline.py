"""Shared orchestration operations behind both the CLI and the HTTP service.

Keeping campaign simulation, dataset assembly, training, evaluation, and
what-if reporting in one place guarantees the two surfaces emit
byte-identical artifacts for identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import harmonize
from .harmonize import (
    IqrTrim,
    PercentileTrim,
    RefinedDataset,
    SplitSpec,
    TrimMethod,
    assemble,
    load_dataset,
    save_dataset,
)
from .models import (
    GbtConfig,
    MlpConfig,
    ModelRegistry,
    evaluate,
    predict_batch_ms,
    train_gbt,
    train_mlp,
)
from .simcluster import (
    ClusterConfig,
    ScenarioSpec,
    WorkloadSpec,
    run_scenario,
)
from .telemetry import TelemetryStore
from .whatif import (
    DeploymentBounds,
    PairingConfig,
    Transition,
    run_whatif,
)
from .simcluster import RegimeKey

DEFAULT_USER_LEVELS = (200, 400, 600)
DEFAULT_POD_LEVELS = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class CampaignSpec:
    user_levels: tuple = DEFAULT_USER_LEVELS
    pod_levels: tuple = DEFAULT_POD_LEVELS
    ticks_per_regime: int = 2000
    tick_ms: float = 20.0
    seed: int = 0
    anomaly_rate: float = 0.005
    service_time_ms: float = 8.0
    service_cv: float = 0.25
    think_time_ms: float = 400.0

    def __post_init__(self):
        if not self.user_levels or not self.pod_levels:
            raise ValueError("user_levels and pod_levels must be nonempty")

    def scenario(self) -> ScenarioSpec:
        regimes = tuple(
            (
                WorkloadSpec(users=u, think_time_ms=self.think_time_ms),
                ClusterConfig(
                    pods=p,
                    service_time_ms=self.service_time_ms,
                    service_cv=self.service_cv,
                ),
            )
            for u in self.user_levels
            for p in self.pod_levels
        )
        return ScenarioSpec(
            regimes=regimes,
            ticks_per_regime=self.ticks_per_regime,
            tick_ms=self.tick_ms,
            seed=self.seed,
            anomaly_rate=self.anomaly_rate,
        )


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def parse_trim(spec: str) -> TrimMethod:
    """Parse 'percentile:1,99' or 'iqr:1.5' (bare names use defaults)."""
    if ":" in spec:
        name, args = spec.split(":", 1)
    else:
        name, args = spec, ""
    if name == "percentile":
        low, high = (float(v) for v in args.split(",")) if args else (1.0, 99.0)
        return PercentileTrim(low, high)
    if name == "iqr":
        return IqrTrim(float(args)) if args else IqrTrim()
    raise ValueError(f"unknown trim method {spec!r}")


def run_campaign(spec: CampaignSpec, store: TelemetryStore) -> dict:
    records = run_scenario(spec.scenario())
    summary = store.ingest(records)
    return {
        "regimes": len(spec.user_levels) * len(spec.pod_levels),
        "records": len(records),
        "accepted": summary.accepted,
        "rejected": summary.rejected,
        "duplicate_batch": summary.duplicate_batch,
    }


def build_dataset(
    store: TelemetryStore,
    train_users,
    test_users,
    pods,
    trim: TrimMethod,
    outdir,
    test_pods=None,
) -> dict:
    split = SplitSpec.from_user_levels(train_users, test_users, pods, test_pods)
    train, test = assemble(store, split, trim)
    save_dataset(train, outdir, "train")
    save_dataset(test, outdir, "test")
    return {"train_rows": len(train), "test_rows": len(test), "out": str(outdir)}


def train_model(
    kind: str,
    dataset_dir,
    registry: ModelRegistry,
    model_id: str,
    config: Optional[dict] = None,
) -> dict:
    train = load_dataset(dataset_dir, "train")
    config = dict(config or {})
    if kind == "gbt":
        model = train_gbt(train, GbtConfig(**config))
    elif kind == "mlp":
        if "layer_widths" in config:
            config["layer_widths"] = tuple(config["layer_widths"])
        model = train_mlp(train, MlpConfig(**config))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    metadata = {
        "training_rows": len(train),
        "training_provenance": train.provenance,
        "regime_validity": sorted(
            k.label() for k in train.regime_keys()
        ),
    }
    entry = registry.save(model, model_id, metadata)
    return {"model_id": entry.model_id, "kind": kind, "rows": len(train)}


def evaluate_model(
    registry: ModelRegistry, model_id: str, dataset_dir, name: str = "test"
):
    model = registry.load(model_id)
    test = load_dataset(dataset_dir, name)
    report = evaluate(model, test)
    y_pred = predict_batch_ms(model, test.features)
    return report, test.target_ms, y_pred


def whatif_report(
    registry: ModelRegistry,
    model_id: str,
    store: TelemetryStore,
    from_users: int,
    from_pods: int,
    action: str,
    pairing: PairingConfig = PairingConfig(),
    trim: TrimMethod = PercentileTrim(),
    grade_bounds: DeploymentBounds = DeploymentBounds(),
):
    model = registry.load(model_id)
    transition = Transition.from_action(RegimeKey(from_users, from_pods), action)
    return run_whatif(
        model,
        store,
        transition,
        cfg=pairing,
        trim=trim,
        model_id=model_id,
        grade_bounds=grade_bounds,
    )
