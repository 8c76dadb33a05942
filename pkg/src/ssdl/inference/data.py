from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..network import SparseNetwork, forward_flat

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """Fixed design ``xs`` in ``[0, 1]^p`` with responses ``ys``."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        ys = np.array(self.ys, dtype=float).reshape(-1)
        if xs.ndim == 1:
            xs = xs[:, None]
        if xs.ndim != 2 or xs.shape[0] != ys.shape[0]:
            raise ValueError("xs must be (n, p) with one response per row")
        if xs.size and (xs.min() < 0 or xs.max() > 1):
            raise ValueError("design points must lie in the unit cube")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.ys.shape[0]

    @property
    def p(self) -> int:
        return self.xs.shape[1]


def gaussian_loglik(residual: np.ndarray) -> float:
    """Unit-variance Gaussian log-likelihood of a residual vector."""
    return -0.5 * float(residual @ residual) - 0.5 * residual.size * LOG_2PI


def log_likelihood(net: SparseNetwork, data: RegressionDataset) -> float:
    if data.n == 0:
        return 0.0
    if data.p != net.arch.input_dim:
        raise ValueError("data dimension does not match the network input")
    pred = forward_flat(net.arch, net.beta, data.xs, net.clip_bound)
    return gaussian_loglik(data.ys - pred)


def empirical_l2(predictor, f0, xs) -> float:
    """Root mean square difference over the design points.

    ``predictor`` and ``f0`` are callables on an ``(n, p)`` array or arrays of
    values already evaluated at ``xs``.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if xs.shape[0] == 0:
        raise ValueError("empirical norm needs at least one point")
    a = predictor(xs) if callable(predictor) else np.asarray(predictor, dtype=float)
    b = f0(xs) if callable(f0) else np.asarray(f0, dtype=float)
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return math.sqrt(float(np.mean(d * d)))
