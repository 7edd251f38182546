"""Evaluation tests: grading table exactness, percentile convention,
R-squared edge semantics, and tail metrics."""

from __future__ import annotations

import numpy as np
import pytest

from ndtwin.harmonize import RefinedDataset
from ndtwin.models import InsufficientTailSamplesError, evaluate, grade_quality, tail_eval
from ndtwin.models.evaluate import nearest_rank


class _BiasedModel:
    """Duck-typed model: reads the true latency stashed in the congestion
    column and predicts it plus a fixed millisecond bias."""

    def __init__(self, bias_ms=0.0):
        self.bias_ms = bias_ms

    def predict_log(self, X):
        return np.log1p(X[:, 1] + self.bias_ms)


def _dataset(latencies_ms, users=600, pods=4):
    y = np.asarray(latencies_ms, dtype=np.float64)
    n = len(y)
    feats = np.zeros((n, 7))
    feats[:, 0] = users / pods
    feats[:, 1] = y
    feats[:, 6] = pods
    return RefinedDataset(
        features=feats,
        log_target=np.log1p(y),
        users=np.full(n, users, dtype=np.int64),
        pods=np.full(n, pods, dtype=np.int64),
        raw=[],
    )


def test_grade_quality_reference_rows():
    assert grade_quality(8.97, 29.32, mean_true_latency_ms=120.0) == "Excellent"
    assert grade_quality(120.0, 400.0, mean_true_latency_ms=100.0) == "Weak"


def test_grade_quality_inclusive_boundaries():
    # mean 100 makes the relative criteria strictly worse than the absolute ones
    assert grade_quality(50.0, 150.0, 100.0) == "Excellent"
    assert grade_quality(50.001, 150.0, 100.0) == "Good"
    assert grade_quality(50.0, 150.001, 100.0) == "Good"
    assert grade_quality(100.0, 300.0, 100.0) == "Good"
    assert grade_quality(100.001, 300.0, 100.0) == "Weak"
    assert grade_quality(100.0, 300.001, 100.0) == "Weak"


def test_grade_quality_relative_bounds_rescue_large_absolute_errors():
    # 8% MAE and 20% P95 of a very large mean latency
    assert grade_quality(400.0, 1000.0, 5000.0) == "Excellent"
    with pytest.raises(ValueError):
        grade_quality(10.0, 20.0, 0.0)


def test_nearest_rank_percentile():
    values = np.arange(1.0, 101.0)
    assert nearest_rank(values, 95.0) == 95.0
    assert nearest_rank(values, 100.0) == 100.0
    assert nearest_rank(np.array([7.0]), 50.0) == 7.0
    with pytest.raises(ValueError):
        nearest_rank(np.array([]), 95.0)


def test_r2_semantics_constant_target():
    y = np.full(30, 50.0)
    ds = _dataset(y)
    perfect = evaluate(_BiasedModel(), ds)
    assert perfect.r2 == 1.0 and perfect.r2_defined

    off = evaluate(_BiasedModel(5.0), ds)
    assert off.r2 is None and not off.r2_defined
    assert off.mae_ms == pytest.approx(5.0)


def test_evaluate_aggregate_and_per_regime():
    rng = np.random.default_rng(0)
    y = rng.uniform(50.0, 400.0, size=200)
    ds = _dataset(y)
    report = evaluate(_BiasedModel(), ds)
    assert report.mae_ms == pytest.approx(0.0, abs=1e-9)
    assert report.r2 == pytest.approx(1.0)
    assert report.grade == "Excellent"
    assert report.n_samples == 200
    assert set(report.per_regime) == {"600,4"}
    assert report.per_regime["600,4"]["mae_ms"] == pytest.approx(0.0, abs=1e-9)
    assert set(report.tail) == {"P90", "P95"}
    # 200 samples: 20 above P90 (>= min), 10 above P95 (insufficient)
    assert report.tail["P90"]["count"] == 20
    assert report.tail["P95"]["count"] == 0
    assert "insufficient" in report.tail["P95"]


def test_tail_eval_validation():
    y = np.linspace(10.0, 100.0, 500)
    ds = _dataset(y)
    model = _BiasedModel()
    with pytest.raises(ValueError):
        tail_eval(model, ds, "P50")
    result = tail_eval(model, ds, "P95")
    assert result["count"] == 25
    assert result["mae_ms"] == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(InsufficientTailSamplesError):
        tail_eval(model, _dataset(y[:50]), "P95")


def test_eval_report_roundtrip():
    y = np.linspace(10.0, 100.0, 400)
    ds = _dataset(y)
    report = evaluate(_BiasedModel(0.5), ds)
    from ndtwin.models import EvalReport

    assert EvalReport.from_dict(report.to_dict()) == report
