"""Feed-forward latency model: ReLU hidden layers, optional batch norm,
dropout during training only, Huber loss on the log target, Adam updates.

Implemented directly on float64 numpy arrays so the analytic gradients can
be checked against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import math

import numpy as np

from ..harmonize import FEATURE_NAMES
from .common import EmptyDatasetError, ModelError, TrainedModel, schema_hash

_BN_EPS = 1e-5


@dataclass(frozen=True)
class MlpConfig:
    layer_widths: tuple = (64, 32, 16)
    dropout: float = 0.3
    use_batch_norm: bool = False
    huber_delta: float = 1.0
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 200
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if not self.layer_widths or any(w < 1 for w in self.layer_widths):
            raise ValueError("layer_widths must be positive integers")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.huber_delta <= 0 or self.learning_rate <= 0:
            raise ValueError("huber_delta and learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


class DivergenceError(ModelError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class MlpNet:
    """Parameter container with explicit forward/backward passes."""

    def __init__(self, n_inputs: int, widths, use_bn: bool, dropout: float,
                 huber_delta: float, rng: Optional[np.random.Generator] = None):
        self.widths = list(widths)
        self.use_bn = use_bn
        self.dropout = dropout
        self.huber_delta = huber_delta
        self.x_mean = np.zeros(n_inputs)
        self.x_std = np.ones(n_inputs)
        # affine output calibration in log space; dropout training shrinks
        # raw outputs toward the target mean, and this undoes that bias
        self.out_scale = 1.0
        self.out_shift = 0.0
        self.params: dict = {}
        self.running: dict = {}
        sizes = [n_inputs] + self.widths + [1]
        rng = rng or np.random.default_rng(0)
        for i in range(len(sizes) - 1):
            fan_in = sizes[i]
            self.params[f"W{i}"] = rng.normal(
                0.0, np.sqrt(2.0 / fan_in), size=(sizes[i], sizes[i + 1])
            )
            self.params[f"b{i}"] = np.zeros(sizes[i + 1])
            if use_bn and i < len(self.widths):
                self.params[f"gamma{i}"] = np.ones(sizes[i + 1])
                self.params[f"beta{i}"] = np.zeros(sizes[i + 1])
                self.running[f"mean{i}"] = np.zeros(sizes[i + 1])
                self.running[f"var{i}"] = np.ones(sizes[i + 1])

    @property
    def n_layers(self) -> int:
        return len(self.widths) + 1

    def _forward(self, X, train: bool, drop_masks=None, update_running: bool = False):
        """Returns (pred, cache). Dropout applies only when masks are given."""
        cache = {"a0": X}
        a = X
        for i in range(self.n_layers):
            z = a @ self.params[f"W{i}"] + self.params[f"b{i}"]
            cache[f"z{i}"] = z
            if i == self.n_layers - 1:
                return z[:, 0], cache
            if self.use_bn:
                if train:
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    if update_running:
                        self.running[f"mean{i}"] = 0.9 * self.running[f"mean{i}"] + 0.1 * mu
                        self.running[f"var{i}"] = 0.9 * self.running[f"var{i}"] + 0.1 * var
                else:
                    mu = self.running[f"mean{i}"]
                    var = self.running[f"var{i}"]
                inv_std = 1.0 / np.sqrt(var + _BN_EPS)
                xhat = (z - mu) * inv_std
                z = self.params[f"gamma{i}"] * xhat + self.params[f"beta{i}"]
                cache[f"xhat{i}"] = xhat
                cache[f"inv_std{i}"] = inv_std
                cache[f"bn_train{i}"] = train
            h = np.maximum(z, 0.0)
            cache[f"h{i}"] = h
            if drop_masks is not None:
                h = h * drop_masks[i]
            cache[f"a{i + 1}"] = h
            a = h
        raise AssertionError("unreachable")

    def loss_and_grad(self, X, y, train: bool = True, drop_masks=None,
                      update_running: bool = False):
        """Mean Huber loss over the batch and gradients for every parameter."""
        n = len(y)
        pred, cache = self._forward(X, train=train, drop_masks=drop_masks,
                                    update_running=update_running)
        r = pred - y
        delta = self.huber_delta
        absr = np.abs(r)
        loss = float(
            np.mean(np.where(absr <= delta, 0.5 * r**2, delta * (absr - 0.5 * delta)))
        )
        grads = {}
        dpred = np.clip(r, -delta, delta) / n
        da = dpred[:, None]  # gradient flowing into layer input, starts at output z
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                if drop_masks is not None:
                    da = da * drop_masks[i]
                da = da * (cache[f"h{i}"] > 0.0)
                if self.use_bn:
                    xhat = cache[f"xhat{i}"]
                    inv_std = cache[f"inv_std{i}"]
                    grads[f"gamma{i}"] = (da * xhat).sum(axis=0)
                    grads[f"beta{i}"] = da.sum(axis=0)
                    dxhat = da * self.params[f"gamma{i}"]
                    if cache[f"bn_train{i}"]:
                        m = len(X)
                        da = (
                            inv_std
                            / m
                            * (
                                m * dxhat
                                - dxhat.sum(axis=0)
                                - xhat * (dxhat * xhat).sum(axis=0)
                            )
                        )
                    else:
                        da = dxhat * inv_std
            a_prev = cache[f"a{i}"]
            grads[f"W{i}"] = a_prev.T @ da
            grads[f"b{i}"] = da.sum(axis=0)
            if i > 0:
                da = da @ self.params[f"W{i}"].T
        return loss, grads

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_std
        pred, _ = self._forward(Xs, train=False, drop_masks=None)
        return self.out_scale * pred + self.out_shift

    def to_dict(self) -> dict:
        return {
            "widths": self.widths,
            "use_bn": self.use_bn,
            "dropout": self.dropout,
            "huber_delta": self.huber_delta,
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "out_scale": self.out_scale,
            "out_shift": self.out_shift,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "running": {k: v.tolist() for k, v in self.running.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpNet":
        net = cls(
            n_inputs=len(d["x_mean"]),
            widths=d["widths"],
            use_bn=d["use_bn"],
            dropout=d["dropout"],
            huber_delta=d["huber_delta"],
        )
        net.x_mean = np.array(d["x_mean"], dtype=np.float64)
        net.x_std = np.array(d["x_std"], dtype=np.float64)
        net.out_scale = float(d.get("out_scale", 1.0))
        net.out_shift = float(d.get("out_shift", 0.0))
        net.params = {k: np.array(v, dtype=np.float64) for k, v in d["params"].items()}
        net.running = {k: np.array(v, dtype=np.float64) for k, v in d["running"].items()}
        return net


def train_mlp(train, config: MlpConfig = MlpConfig()) -> TrainedModel:
    X = np.asarray(train.features, dtype=np.float64)
    y = np.asarray(train.log_target, dtype=np.float64)
    if len(y) == 0:
        raise EmptyDatasetError("training dataset is empty")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ModelError("non-finite feature or target values")

    rng = np.random.default_rng(config.seed)
    net = MlpNet(
        n_inputs=X.shape[1],
        widths=config.layer_widths,
        use_bn=config.use_batch_norm,
        dropout=config.dropout,
        huber_delta=config.huber_delta,
        rng=rng,
    )
    net.x_mean = X.mean(axis=0)
    std = X.std(axis=0)
    net.x_std = np.where(std > 0, std, 1.0)
    # start the output head at the target mean for faster convergence
    net.params[f"b{net.n_layers - 1}"][:] = y.mean()

    Xs = (X - net.x_mean) / net.x_std
    adam_m = {k: np.zeros_like(v) for k, v in net.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in net.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = len(y)
    for epoch in range(config.epochs):
        # cosine decay keeps late epochs from bouncing around the optimum
        lr = config.learning_rate * 0.5 * (
            1.0 + math.cos(math.pi * epoch / config.epochs)
        )
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            xb, yb = Xs[rows], y[rows]
            masks = None
            if config.dropout > 0:
                keep = 1.0 - config.dropout
                masks = [
                    (rng.random((len(rows), w)) < keep) / keep for w in net.widths
                ]
            loss, grads = net.loss_and_grad(
                xb, yb, train=True, drop_masks=masks, update_running=True
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            step += 1
            for k in net.params:
                g = grads[k]
                adam_m[k] = beta1 * adam_m[k] + (1 - beta1) * g
                adam_v[k] = beta2 * adam_v[k] + (1 - beta2) * g * g
                mhat = adam_m[k] / (1 - beta1**step)
                vhat = adam_v[k] / (1 - beta2**step)
                update = mhat / (np.sqrt(vhat) + eps)
                if k.startswith("W"):
                    # decoupled weight decay on the weight matrices only
                    update = update + config.weight_decay * net.params[k]
                net.params[k] -= lr * update

    raw, _ = net._forward(Xs, train=False, drop_masks=None)
    var = float(np.var(raw))
    if var > 0:
        net.out_scale = float(np.cov(raw, y, bias=True)[0, 1] / var)
        net.out_shift = float(y.mean() - net.out_scale * raw.mean())

    return TrainedModel(
        kind="mlp",
        feature_names=FEATURE_NAMES,
        feature_schema_hash=schema_hash(FEATURE_NAMES),
        config={**asdict(config), "layer_widths": list(config.layer_widths)},
        payload=net,
    )


def loss_and_grads(net: MlpNet, X: np.ndarray, y: np.ndarray):
    """Deterministic loss/gradients (dropout off, batch statistics) for
    finite-difference verification."""
    return net.loss_and_grad(
        np.asarray(X, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
        train=True,
        drop_masks=None,
        update_running=False,
    )
