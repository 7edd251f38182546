"""What-if engine tests: transition algebra, counterfactual feature
transforms, matching and sign-agreement oracles, and the trust grades."""

from __future__ import annotations

import numpy as np
import pytest

from ndtwin.harmonize import RefinedDataset
from ndtwin.simcluster import RegimeKey, TelemetryRecord
from ndtwin.whatif import (
    AllPairsTiedError,
    DeploymentBounds,
    InsufficientPairsError,
    InvalidTransitionError,
    PairingConfig,
    Transition,
    build_matched_pairs,
    classify_sensitivity,
    counterfactual_features,
    delta_metrics,
    deployment_grade,
    run_whatif,
    sign_agreement,
)


def _record(users=600, pods=4, depth=30.0, backlog=0.8, latency=250.0):
    return TelemetryRecord(
        timestamp_ms=0.0,
        current_users=users,
        pods=pods,
        avg_depth_on_enqueue=depth,
        avg_backlog_sec_est=backlog,
        avg_cpu_process_pct=70.0,
        avg_cpu_system_pct=12.0,
        avg_mem_system_pct=35.0,
        avg_total_infer_ms=latency,
    )


# --- transitions --------------------------------------------------------

def test_transition_parsing():
    key = RegimeKey(600, 4)
    up = Transition.from_action(key, "pods+1")
    assert up.to_key == RegimeKey(600, 5) and up.kind == "pods+1"
    down = Transition.from_action(key, "pods-1")
    assert down.to_key == RegimeKey(600, 3)
    shift = Transition.from_action(key, "users:200")
    assert shift.to_key == RegimeKey(200, 4)
    for bad in ("pods+2", "users:", "scale:3", ""):
        with pytest.raises(InvalidTransitionError):
            Transition.from_action(key, bad)


def test_transition_validation():
    with pytest.raises(InvalidTransitionError):
        Transition.pod_delta(RegimeKey(600, 1), -1)
    with pytest.raises(InvalidTransitionError):
        Transition(RegimeKey(600, 4), RegimeKey(600, 6), "pods+1")
    with pytest.raises(InvalidTransitionError):
        Transition(RegimeKey(600, 4), RegimeKey(500, 5), "pods+1")
    with pytest.raises(InvalidTransitionError):
        Transition(RegimeKey(600, 4), RegimeKey(200, 5), "users:200")


# --- counterfactual feature transform ----------------------------------

def test_pod_delta_renormalizes_demand_features():
    rec = _record(users=600, pods=4, depth=30.0, backlog=0.8)
    t = Transition.from_action(RegimeKey(600, 4), "pods+1")
    fv = counterfactual_features(rec, t)
    assert fv.workload_intensity == 600 / 5
    assert fv.congestion_index == 30.0 / 5
    assert fv.backlog_flow == 0.8 / 5
    assert fv.pods == 5.0
    assert fv.cpu_process_pct == 70.0
    assert fv.mem_system_pct == 35.0


def test_user_shift_changes_intensity_only():
    rec = _record(users=600, pods=4, depth=30.0, backlog=0.8)
    t = Transition.from_action(RegimeKey(600, 4), "users:200")
    fv = counterfactual_features(rec, t)
    assert fv.workload_intensity == 200 / 4
    assert fv.congestion_index == 30.0 / 4
    assert fv.backlog_flow == 0.8 / 4
    assert fv.pods == 4.0


def test_pod_delta_below_one_rejected():
    rec = _record(pods=1)
    t = Transition(RegimeKey(600, 2), RegimeKey(600, 1), "pods-1")
    with pytest.raises(InvalidTransitionError):
        counterfactual_features(rec, t)


# --- sign agreement -----------------------------------------------------

def _sign_agreement_brute_force(delta_true, delta_pred, eps=0.5):
    def sgn(v):
        if abs(v) < eps:
            return 0
        return 1 if v > 0 else -1

    live = [(t, p) for t, p in zip(delta_true, delta_pred) if abs(t) >= eps]
    if not live:
        return None
    return sum(1 for t, p in live if sgn(t) == sgn(p)) / len(live)


def test_sign_agreement_matches_brute_force_recount():
    rng = np.random.default_rng(0)
    grid = np.array([-2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0])
    for _ in range(2000):
        n = int(rng.integers(1, 40))
        if rng.random() < 0.5:
            dt = rng.normal(0.0, 1.0, size=n)
            dp = rng.normal(0.0, 1.0, size=n)
        else:  # exercise exact-boundary values
            dt = rng.choice(grid, size=n)
            dp = rng.choice(grid, size=n)
        expected = _sign_agreement_brute_force(dt, dp)
        if expected is None:
            with pytest.raises(AllPairsTiedError):
                sign_agreement(dt, dp)
        else:
            assert sign_agreement(dt, dp) == expected


def test_sign_agreement_validation():
    with pytest.raises(ValueError):
        sign_agreement([1.0, 2.0], [1.0])
    with pytest.raises(AllPairsTiedError):
        sign_agreement([0.1, -0.2], [5.0, -5.0])


# --- grades -------------------------------------------------------------

def test_classify_sensitivity_table():
    assert classify_sensitivity(0.52) == "Negligible"
    assert classify_sensitivity(0.94) == "High"
    assert classify_sensitivity(0.48) == "Negligible"
    assert classify_sensitivity(0.91) == "High"
    assert classify_sensitivity(0.55) == "Low"
    assert classify_sensitivity(0.98) == "High"
    assert classify_sensitivity(0.85) == "High"
    assert classify_sensitivity(0.8499999) == "Low"
    with pytest.raises(ValueError):
        classify_sensitivity(1.2)


def test_deployment_grade_boundaries():
    assert deployment_grade(0.90, 5.0) == "Excellent"
    assert deployment_grade(0.90, 5.001) == "Reliable"
    assert deployment_grade(0.89, 4.0) == "Reliable"
    assert deployment_grade(0.75, 10.0) == "Reliable"
    assert deployment_grade(0.75, 10.001) == "Unreliable"
    assert deployment_grade(0.74, 1.0) == "Unreliable"
    assert deployment_grade(
        0.80, 8.0, DeploymentBounds(0.80, 8.0, 0.5, 20.0)
    ) == "Excellent"
    with pytest.raises(ValueError):
        deployment_grade(float("nan"), 1.0)


def test_delta_metrics():
    m = delta_metrics([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
    assert m["mean_delta_pred_ms"] == 2.0
    assert m["mean_delta_true_ms"] == 2.0
    assert m["mae_delta_ms"] == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        delta_metrics([], [])


# --- matching -----------------------------------------------------------

def _ds(nuisance, latency, users=600, pods=4):
    nuisance = np.asarray(nuisance, dtype=np.float64)
    latency = np.asarray(latency, dtype=np.float64)
    n = len(latency)
    feats = np.zeros((n, 7))
    feats[:, 0] = users / pods
    feats[:, 3:6] = nuisance
    feats[:, 6] = pods
    return RefinedDataset(
        features=feats,
        log_target=np.log1p(latency),
        users=np.full(n, users, dtype=np.int64),
        pods=np.full(n, pods, dtype=np.int64),
        raw=[],
    )


def _brute_force_pairs(ds_a, ds_b, cfg):
    a = ds_a.features[:, 3:6]
    b = ds_b.features[:, 3:6]
    combined = np.vstack([a, b])
    std = combined.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    mean = combined.mean(axis=0)
    a_s, b_s = (a - mean) / std, (b - mean) / std
    out = []
    for i in range(len(a_s)):
        d = np.sqrt(((b_s - a_s[i]) ** 2).sum(axis=1))
        j = int(np.argmin(d))
        if d[j] <= cfg.caliper:
            out.append((i, j, float(ds_b.target_ms[j] - ds_a.target_ms[i])))
    return out


def test_build_matched_pairs_matches_brute_force():
    rng = np.random.default_rng(3)
    ds_a = _ds(rng.normal(50, 5, size=(600, 3)), rng.uniform(100, 300, 600))
    ds_b = _ds(rng.normal(50, 5, size=(580, 3)), rng.uniform(50, 250, 580), pods=5)
    cfg = PairingConfig(caliper=0.5, min_pairs=1)
    pairs = build_matched_pairs(ds_a, ds_b, cfg)
    oracle = _brute_force_pairs(ds_a, ds_b, cfg)
    assert [(p.index_a, p.index_b) for p in pairs] == [(i, j) for i, j, _ in oracle]
    for p, (_, _, dt) in zip(pairs, oracle):
        assert p.delta_true_ms == pytest.approx(dt)
        assert p.nuisance_distance <= cfg.caliper


def test_build_matched_pairs_caliper_and_min_pairs():
    ds_a = _ds(np.zeros((40, 3)), np.full(40, 100.0))
    ds_b = _ds(np.full((40, 3), 100.0), np.full(40, 100.0), pods=5)
    with pytest.raises(InsufficientPairsError) as exc:
        build_matched_pairs(ds_a, ds_b, PairingConfig(caliper=0.1, min_pairs=30))
    assert exc.value.achieved == 0 and exc.value.required == 30


def test_pairing_config_validation():
    with pytest.raises(ValueError):
        PairingConfig(nuisance_features=("not_a_feature",))
    with pytest.raises(ValueError):
        PairingConfig(caliper=0.0)
    with pytest.raises(ValueError):
        PairingConfig(min_pairs=0)


# --- end to end ---------------------------------------------------------

def test_run_whatif_end_to_end(campaign_store, gbt_model):
    t = Transition.from_action(RegimeKey(600, 4), "pods+1")
    report = run_whatif(gbt_model, campaign_store, t, model_id="gbt-fixture")
    assert report.from_regime == "u600_p4"
    assert report.to_regime == "u600_p5"
    assert report.n_pairs >= 30
    assert not report.degenerate
    assert 0.0 <= report.sign_agreement <= 1.0
    assert report.sensitivity in ("High", "Low", "Negligible")
    assert report.deployment_grade in ("Excellent", "Reliable", "Unreliable")
    assert report.provenance["model_id"] == "gbt-fixture"
    # the serialized form is stable and hash-addressable
    body = report.to_dict()
    assert "sign_agreement" in body and "_pairs" not in body
    assert len(report.report_id()) == 16


def test_run_whatif_degenerate_all_tied(gbt_model, campaign_store):
    t = Transition.from_action(RegimeKey(600, 4), "pods+1")
    report = run_whatif(
        gbt_model, campaign_store, t,
        cfg=PairingConfig(epsilon_tie_ms=1e9, min_pairs=30),
    )
    assert report.degenerate
    assert report.sign_agreement is None
    assert report.sensitivity is None
    assert report.deployment_grade == "Unreliable"
