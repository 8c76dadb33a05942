"""Penalised least squares for dense ReLU networks by mini-batch SGD.

Minimises ``sum_i (y_i - f(x_i))^2 + penalty * ||B||_2^2`` with hand-written
backpropagation.  The ReLU subgradient at 0 is taken to be 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ..network import Architecture
from .data import RegressionDataset

__all__ = ["DivergenceError", "MapFit", "init_dense", "dense_predict", "loss_and_grad", "map_sgd_train"]

Params = list  # [(W_1, b_1), ..., (W_L, b_L), (W_out, None)]


class DivergenceError(RuntimeError):
    pass


def init_dense(arch: Architecture, rng: np.random.Generator, shift_init: float = 0.0) -> Params:
    """He-normal weights; shifts set to ``shift_init`` (negative values open the ReLU)."""
    w = arch.widths
    params = []
    for l in range(1, len(w)):
        W = rng.standard_normal((w[l], w[l - 1])) * math.sqrt(2.0 / w[l - 1])
        b = np.full(w[l], float(shift_init)) if l < len(w) - 1 else None
        params.append((W, b))
    return params


def copy_params(params: Params) -> Params:
    return [(W.copy(), None if b is None else b.copy()) for W, b in params]


def _forward(params: Params, X: np.ndarray):
    acts = [X]
    pre = []
    H = X
    for W, b in params[:-1]:
        Z = H @ W.T - b
        pre.append(Z)
        H = np.maximum(Z, 0.0)
        acts.append(H)
    out = (H @ params[-1][0].T)[:, 0]
    return out, acts, pre


def dense_predict(params: Params, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return _forward(params, X)[0]


def _sq_norm(params: Params) -> float:
    return sum(float(np.sum(W * W)) + (0.0 if b is None else float(b @ b)) for W, b in params)


def loss_and_grad(params: Params, X: np.ndarray, y: np.ndarray, penalty_weight: float, scale: float = 1.0):
    """Objective ``scale * sum (y - f)^2 + penalty * ||B||^2`` and its gradient."""
    out, acts, pre = _forward(params, X)
    r = out - y
    loss = scale * float(r @ r) + penalty_weight * _sq_norm(params)
    grads = [None] * len(params)
    dout = 2.0 * scale * r[:, None]  # (batch, 1)
    W_out = params[-1][0]
    grads[-1] = (dout.T @ acts[-1] + 2 * penalty_weight * W_out, None)
    dH = dout @ W_out
    for l in range(len(params) - 2, -1, -1):
        W, b = params[l]
        dZ = dH * (pre[l] > 0)
        gW = dZ.T @ acts[l] + 2 * penalty_weight * W
        gb = -dZ.sum(axis=0) + 2 * penalty_weight * b
        grads[l] = (gW, gb)
        dH = dZ @ W
    return loss, grads


@dataclass
class MapFit:
    params: Params
    loss_trace: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return dense_predict(self.params, X)

    def mse(self, data: RegressionDataset) -> float:
        r = self.predict(data.xs) - data.ys
        return float(np.mean(r * r))


def _lr_at(lr_schedule, epoch: int) -> float:
    if callable(lr_schedule):
        return float(lr_schedule(epoch))
    return float(lr_schedule)


def map_sgd_train(
    arch: Architecture,
    data: RegressionDataset,
    penalty_weight: float = 1e-4,
    epochs: int = 100,
    lr_schedule: Union[float, Callable[[int], float]] = 1e-2,
    seed: int = 0,
    batch_size: int = 32,
    momentum: float = 0.9,
    init: Optional[Params] = None,
    shift_init: float = -0.1,
    divergence_threshold: float = 1e6,
) -> MapFit:
    """Mini-batch SGD with momentum on the penalised least-squares objective.

    Each step follows the gradient of the batch estimate of ``objective / n``.
    The loss trace holds the full objective after each epoch (entry 0 is the
    initial value).
    """
    rng = np.random.default_rng(seed)
    params = copy_params(init) if init is not None else init_dense(arch, rng, shift_init)
    X, y = data.xs, data.ys
    n = data.n
    full, _ = loss_and_grad(params, X, y, penalty_weight)
    trace = [full]
    vel = [(np.zeros_like(W), None if b is None else np.zeros_like(b)) for W, b in params]
    for epoch in range(epochs):
        lr = _lr_at(lr_schedule, epoch)
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = loss_and_grad(params, X[idx], y[idx], penalty_weight / n, scale=1.0 / idx.size)
            for k, ((W, b), (gW, gb), (vW, vb)) in enumerate(zip(params, grads, vel)):
                vW *= momentum
                vW -= lr * gW
                W += vW
                if b is not None:
                    vb *= momentum
                    vb -= lr * gb
                    b += vb
        full, _ = loss_and_grad(params, X, y, penalty_weight)
        trace.append(full)
        if not math.isfinite(full) or full > divergence_threshold:
            raise DivergenceError(
                f"objective {full:.4g} exceeded {divergence_threshold:g} at epoch {epoch + 1} (lr={lr:g})"
            )
    return MapFit(params, trace)
