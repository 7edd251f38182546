"""Gradient-boosted tree tests: determinism, fit quality on synthetic
functions, serialization, and input validation."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from ndtwin.models import EmptyDatasetError, GbtConfig, ModelError, train_gbt
from ndtwin.models.gbt import GbtEnsemble


def _synthetic(n=2000, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    X = np.zeros((n, 7))
    X[:, 0] = rng.uniform(0.0, 3.0, size=n)
    X[:, 1] = rng.uniform(0.0, 1.0, size=n)
    y = 2.0 * X[:, 0] + 1.0 + noise * rng.normal(size=n)
    return SimpleNamespace(features=X, log_target=y)


def test_config_validation():
    with pytest.raises(ValueError):
        GbtConfig(n_estimators=0)
    with pytest.raises(ValueError):
        GbtConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        GbtConfig(subsample=1.5)
    with pytest.raises(ValueError):
        GbtConfig(min_samples_leaf=0)


def test_rejects_empty_and_nonfinite_data():
    with pytest.raises(EmptyDatasetError):
        train_gbt(SimpleNamespace(features=np.zeros((0, 7)), log_target=np.zeros(0)))
    bad = _synthetic(100)
    bad.features[3, 0] = np.nan
    with pytest.raises(ModelError):
        train_gbt(bad)


def test_training_is_deterministic():
    ds = _synthetic(500)
    cfg = GbtConfig(n_estimators=40, max_depth=4, subsample=0.8, seed=5)
    a = train_gbt(ds, cfg)
    b = train_gbt(ds, cfg)
    X = _synthetic(100, seed=9).features
    assert np.array_equal(a.predict_log(X), b.predict_log(X))


def test_fits_linear_function_closely():
    ds = _synthetic(2000, seed=1)
    model = train_gbt(ds, GbtConfig())
    holdout = _synthetic(500, seed=2)
    pred = model.predict_log(holdout.features)
    mae = float(np.mean(np.abs(pred - holdout.log_target)))
    assert mae <= 0.05


def test_training_loss_is_monotone_nonincreasing_without_subsampling():
    ds = _synthetic(800, seed=3, noise=0.1)
    model = train_gbt(ds, GbtConfig(n_estimators=60, max_depth=3))
    losses = model.payload.train_losses
    assert len(losses) == 60
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_constant_features_yield_base_score():
    n = 200
    ds = SimpleNamespace(features=np.ones((n, 7)), log_target=np.linspace(1.0, 2.0, n))
    model = train_gbt(ds, GbtConfig(n_estimators=10, max_depth=3))
    pred = model.predict_log(np.ones((5, 7)))
    assert np.allclose(pred, ds.log_target.mean())


def test_duplicate_values_at_split_do_not_crash():
    rng = np.random.default_rng(7)
    X = np.zeros((400, 7))
    X[:, 0] = rng.integers(0, 3, size=400).astype(float)  # heavy duplication
    y = X[:, 0] + rng.normal(0, 0.01, size=400)
    model = train_gbt(SimpleNamespace(features=X, log_target=y),
                      GbtConfig(n_estimators=30, max_depth=6, min_samples_leaf=1))
    pred = model.predict_log(X)
    assert np.isfinite(pred).all()


def test_serialization_roundtrip():
    ds = _synthetic(500, seed=4)
    model = train_gbt(ds, GbtConfig(n_estimators=25, max_depth=4))
    clone = GbtEnsemble.from_dict(model.payload.to_dict())
    X = _synthetic(80, seed=5).features
    assert np.array_equal(model.payload.predict(X), clone.predict(X))
