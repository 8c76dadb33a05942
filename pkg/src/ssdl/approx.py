"""Constructive ReLU approximation gadgets.

Every construction is first written with unrestricted real weights (a
"raw" layer list) and then converted to a bounded network whose stored
parameters satisfy ``|beta_j| <= 1``.  The conversion uses positive
homogeneity of the ReLU: each hidden unit is divided by a power of two, and
any gain still missing at the output is restored by doubling layers
(``sigma(u + u) = 2u`` for ``u >= 0``).  Scaling by powers of two is exact
in floating point, so the bounded network reproduces the raw one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .network import Architecture, SparseNetwork, forward_flat, sparsify

__all__ = [
    "GadgetNetwork",
    "rescale_layers",
    "raw_forward",
    "sawtooth_net",
    "square_net",
    "product_net",
    "square_depth_law",
    "pl_interpolant_net",
    "kolmogorov_identity_audit",
    "deep_poly_net_template",
    "slope_changes",
]

Layers = list  # [(W_1, b_1), ..., (W_L, b_L), (W_out, None)]; unit = sigma(W h - b)


@dataclass(frozen=True, eq=False)
class GadgetNetwork:
    net: SparseNetwork
    kind: str
    param: int  # m for sawtooth/square/product, K for interpolants
    bound: float  # claimed sup-norm error (0 for exact constructions)
    raw_layers: Layers = field(repr=False, default=None)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.bound >= 0:
            raise ValueError("claimed bound must be nonnegative")

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.net.arch.input_dim == 1 else X[None, :]
        # bound the (units x points) working set of wide gadgets
        step = max(1, 2**22 // max(self.net.arch.widths))
        parts = [
            forward_flat(self.net.arch, self.net.beta, X[i : i + step], self.net.clip_bound)
            for i in range(0, X.shape[0], step)
        ]
        return np.concatenate(parts) if parts else np.zeros(0)

    @property
    def depth(self) -> int:
        return self.net.arch.depth

    @property
    def raw_depth(self) -> int:
        return len(self.raw_layers) - 1


def raw_forward(layers: Layers, X) -> np.ndarray:
    H = np.asarray(X, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    for W, b in layers[:-1]:
        H = np.maximum(H @ W.T - b, 0.0)
    return (H @ layers[-1][0].T)[:, 0]


def _pow2_ceil(v: np.ndarray) -> np.ndarray:
    out = np.ones_like(v)
    pos = v > 0
    out[pos] = np.exp2(np.ceil(np.log2(v[pos])))
    return out


def rescale_layers(layers: Layers) -> Layers:
    """Equivalent layer list with every weight and shift in ``[-1, 1]``."""
    D_prev = np.ones(layers[0][0].shape[1])
    out = []
    for W, b in layers[:-1]:
        W = np.asarray(W, dtype=float)
        b = np.asarray(b, dtype=float)
        need = np.maximum(np.max(np.abs(W) * D_prev, axis=1), np.abs(b))
        D = _pow2_ceil(need)
        out.append((W * D_prev / D[:, None], b / D))
        D_prev = D
    w_out = np.asarray(layers[-1][0], dtype=float) * D_prev
    gain = float(np.max(np.abs(w_out))) if w_out.size else 0.0
    r = max(0, math.ceil(math.log2(gain))) if gain > 1 else 0
    if r == 0:
        out.append((w_out, None))
        return out
    # split the scaled readout z into sigma(z), sigma(-z), two copies each,
    # then r width-4 doubling layers; cost no longer grows with the hidden width
    w_s = w_out / 2.0**r
    out.append((np.vstack([w_s, w_s, -w_s, -w_s]), np.zeros(4)))
    double = np.kron(np.eye(2), np.ones((2, 2)))
    for _ in range(r):
        out.append((double.copy(), np.zeros(4)))
    out.append((np.array([[1.0, 0.0, -1.0, 0.0]]), None))
    return out


def _to_network(layers: Layers) -> SparseNetwork:
    bounded = rescale_layers(layers)
    widths = (bounded[0][0].shape[1],) + tuple(W.shape[0] for W, _ in bounded)
    return sparsify(bounded, Architecture(widths))


# ------------------------------------------------------------ sawtooth / square


def _tent_levels(first_W: np.ndarray, first_b: np.ndarray, m: int):
    """Hidden layers for parallel tent compositions; unit order per level is ``[a..., b...]``.

    ``first_W, first_b`` give the affine inputs ``u_k = first_W[k] h - first_b[k]``.
    """
    K = first_W.shape[0]
    layers = [(np.vstack([first_W, first_W]), np.concatenate([first_b, first_b + 0.5]))]
    I = np.eye(K)
    G = np.hstack([2 * I, -4 * I])  # g = 2a - 4b
    for _ in range(m - 1):
        layers.append((np.vstack([G, G]), np.concatenate([np.zeros(K), np.full(K, 0.5)])))
    return layers, G


def sawtooth_net(m: int) -> GadgetNetwork:
    """``m``-fold composition of the tent map ``2 min(x, 1 - x)`` on ``[0, 1]``, two units per level."""
    if m < 1:
        raise ValueError("m must be >= 1")
    layers, G = _tent_levels(np.ones((1, 1)), np.zeros(1), m)
    layers.append((G, None))
    return GadgetNetwork(_to_network(layers), "sawtooth", m, 0.0, layers, {"teeth": 2 ** (m - 1)})


def _square_levels(first_W: np.ndarray, first_b: np.ndarray, m: int):
    """Parallel square approximants of affine inputs; unit order per level ``[a..., b..., c...]``.

    Returns the hidden layers and the ``(K, 3K)`` readout giving
    ``f_m(u_k) = u_k - sum_j g_j(u_k) / 4^j``.
    """
    K = first_W.shape[0]
    I, Z = np.eye(K), np.zeros((K, K))
    layers = [(np.vstack([first_W, first_W, first_W]), np.concatenate([first_b, first_b + 0.5, first_b]))]
    G = np.hstack([2 * I, -4 * I, Z])
    for j in range(2, m + 1):
        C = np.hstack([-2 * I / 4 ** (j - 1), 4 * I / 4 ** (j - 1), I])  # c - g / 4^(j-1)
        layers.append((np.vstack([G, G, C]), np.concatenate([np.zeros(K), np.full(K, 0.5), np.zeros(K)])))
    readout = np.hstack([-2 * I / 4**m, 4 * I / 4**m, I])
    return layers, readout


def square_bound(m: int) -> float:
    return 2.0 ** (-2 * m - 2)


def square_net(m: int) -> GadgetNetwork:
    """Approximates ``x**2`` on ``[0, 1]`` with sup error at most ``2^(-2m-2)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    layers, readout = _square_levels(np.ones((1, 1)), np.zeros(1), m)
    layers.append((readout, None))
    return GadgetNetwork(_to_network(layers), "square", m, square_bound(m), layers)


def square_depth_law(ms=range(1, 9), resolution: int = 4097) -> dict:
    """Regress square-net depth on ``log2(1 / measured sup error)``.

    The construction gains two bits per level, so depth should be linear in
    ``log2(1/eps)`` with slope 1/2.  ``resolution - 1`` must be a power of two
    at least ``2^(max m + 1)`` so the grid hits the error maxima.
    """
    ms = [int(m) for m in ms]
    if len(ms) < 2:
        raise ValueError("need at least two levels")
    x = np.linspace(0.0, 1.0, resolution)
    rows = []
    for m in ms:
        net = square_net(m)
        err = float(np.max(np.abs(net(x[:, None]) - x**2)))
        rows.append({"m": m, "depth": net.raw_depth, "sup_error": err, "bound": net.bound, "bits": -math.log2(err)})
    fit = stats.linregress([r["bits"] for r in rows], [r["depth"] for r in rows])
    return {
        "rows": rows,
        "slope": float(fit.slope),
        "intercept": float(fit.intercept),
        "r_squared": float(fit.rvalue**2),
        "predicted_slope": 0.5,
        "relative_deviation": abs(float(fit.slope) - 0.5) / 0.5,
    }


def product_net(m: int) -> GadgetNetwork:
    """Approximates ``x * y`` on ``[0, 1]^2`` via ``2 sq((x+y)/2) - sq(x)/2 - sq(y)/2``.

    Each ``sq`` is off by at most ``e = 2^(-2m-2)``, so the error is at most
    ``(2 + 1/2 + 1/2) e = 3e``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    first_W = np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]])
    layers, readout = _square_levels(first_W, np.zeros(3), m)
    layers.append((np.array([[2.0, -0.5, -0.5]]) @ readout, None))
    return GadgetNetwork(_to_network(layers), "product", m, 3 * square_bound(m), layers)


# ---------------------------------------------------------------- interpolants


def _pl_layers_1d(values: np.ndarray, knots: np.ndarray) -> Layers:
    slopes = np.diff(values) / np.diff(knots)
    jumps = np.diff(slopes, prepend=0.0)
    # hinges sigma(x - t_k) for k < K - 1 and the constant unit sigma(0 * x + 1) = 1
    K = knots.size
    W = np.ones((K, 1))
    W[-1, 0] = 0.0
    b = np.concatenate([knots[:-1], [-1.0]])
    return [(W, b), (np.concatenate([jumps, [values[0]]])[None, :], None)]


def _bilinear(values: np.ndarray, knots: np.ndarray, X: np.ndarray) -> np.ndarray:
    K = knots.size
    h = knots[1] - knots[0]
    i = np.clip(np.floor(X[:, 0] / h).astype(int), 0, K - 2)
    j = np.clip(np.floor(X[:, 1] / h).astype(int), 0, K - 2)
    u = (X[:, 0] - knots[i]) / h
    v = (X[:, 1] - knots[j]) / h
    return (
        values[i, j] * (1 - u) * (1 - v)
        + values[i + 1, j] * u * (1 - v)
        + values[i, j + 1] * (1 - u) * v
        + values[i + 1, j + 1] * u * v
    )


def _hat_rows(K: int, axis: int):
    """Hats on a uniform grid as affine maps of the hinge layer ``sigma(x_axis - t_k)``, k < K-1."""
    h = 1.0 / (K - 1)
    n_h = K - 1
    coef = np.zeros((K, 2 * n_h))
    const = np.zeros(K)
    off = axis * n_h
    for i in range(K):
        # phi_i = (s(x - t_{i-1}) - 2 s(x - t_i) + s(x - t_{i+1})) / h, with s(x - t_0) = x
        for k, c in ((i - 1, 1.0), (i, -2.0), (i + 1, 1.0)):
            if 0 <= k < n_h:
                coef[i, off + k] += c / h
        if i == 0:
            const[i] = 1.0  # phi_0 = 1 - x/h + s(x - t_1)/h
            coef[i] = 0.0
            coef[i, off + 0] = -1.0 / h
            if n_h > 1:
                coef[i, off + 1] = 1.0 / h
    return coef, const


def pl_interpolant_net(f0: Callable, K: int, p: int = 1, m: int = 8) -> GadgetNetwork:
    """Piecewise-linear interpolant of ``f0`` on ``K`` uniform knots per axis.

    ``p = 1`` is exact (``K`` units).  ``p = 2`` multiplies tensor hats with
    ``product_net(m)``; ``info`` holds the interpolation error estimate and
    the product error budget ``3 * 2^(-2m-2) * sum |f_ij|`` separately.
    """
    if K < 2:
        raise ValueError("need at least two knots per axis")
    if p not in (1, 2):
        raise ValueError("interpolants are implemented for p = 1 and p = 2 only")
    knots = np.linspace(0.0, 1.0, K)
    if p == 1:
        values = np.asarray(f0(knots[:, None]), dtype=float).reshape(-1)
        layers = _pl_layers_1d(values, knots)
        return GadgetNetwork(_to_network(layers), "pl_interpolant", K, 0.0, layers, {"p": 1, "values": values})

    gx, gy = np.meshgrid(knots, knots, indexing="ij")
    values = np.asarray(f0(np.column_stack([gx.ravel(), gy.ravel()])), dtype=float).reshape(K, K)
    n_h = K - 1
    hinge_W = np.zeros((2 * n_h, 2))
    hinge_W[:n_h, 0] = 1.0
    hinge_W[n_h:, 1] = 1.0
    hinge_b = np.concatenate([knots[:-1], knots[:-1]])
    cx, kx = _hat_rows(K, 0)
    cy, ky = _hat_rows(K, 1)
    # square inputs: (phi_i + psi_j)/2 for all (i, j), then phi_i, then psi_j
    pairs = list(itertools.product(range(K), range(K)))
    rows = [0.5 * (cx[i] + cy[j]) for i, j in pairs] + list(cx) + list(cy)
    consts = [0.5 * (kx[i] + ky[j]) for i, j in pairs] + list(kx) + list(ky)
    sq_layers, readout = _square_levels(np.array(rows), -np.array(consts), m)
    mix = np.concatenate(
        [
            [2.0 * values[i, j] for i, j in pairs],
            -0.5 * values.sum(axis=1),
            -0.5 * values.sum(axis=0),
        ]
    )
    layers = [(hinge_W, hinge_b)] + sq_layers + [(mix[None, :] @ readout, None)]
    e = square_bound(m)
    budget = 3 * e * float(np.abs(values).sum())
    grid = np.linspace(0, 1, 201)
    ax, ay = np.meshgrid(grid, grid, indexing="ij")
    X = np.column_stack([ax.ravel(), ay.ravel()])
    interp_err = float(np.max(np.abs(_bilinear(values, knots, X) - np.asarray(f0(X)).reshape(-1))))
    info = {"p": 2, "m": m, "values": values, "product_budget": budget, "interpolation_error": interp_err}
    return GadgetNetwork(_to_network(layers), "pl_interpolant", K, interp_err + budget, layers, info)


def slope_changes(values: np.ndarray, tol: float = 1e-9) -> int:
    """Sign changes of the discrete slope of a sampled function."""
    s = np.diff(values)
    s = s[np.abs(s) > tol]
    return int(np.count_nonzero(np.sign(s[1:]) != np.sign(s[:-1])))


# --------------------------------------------------------- identity audit

_IDENTITIES = {
    "cube_printed": (
        lambda a, b: a**2 * b,
        lambda a, b: 0.5 * (a**2 + b) ** 2 - 0.5 * (a**2 - b) ** 2,
    ),
    "cube_corrected": (
        lambda a, b: a**2 * b,
        lambda a, b: 0.25 * (a**2 + b) ** 2 - 0.25 * (a**2 - b) ** 2,
    ),
    "quartic_printed": (
        lambda a, b: (a * b) ** 2,
        lambda a, b: 0.25 * (a + b) ** 4
        + 7.0 / (4 * 3**3) * (a - b) ** 4
        - 1.0 / (2 * 3**3) * (a + 2 * b) ** 4
        - 2.0**3 / 3**3 * (a + 2 * b) ** 4,
    ),
    "quartic_corrected": (
        lambda a, b: (a * b) ** 2,
        lambda a, b: ((a + b) ** 4 + (a - b) ** 4 - 2 * a**4 - 2 * b**4) / 12.0,
    ),
}

_MONOMIALS = [(i, j) for d in range(5) for i in range(d + 1) for j in [d - i]]


def _monomial_fit(X1, X2, r):
    basis = np.column_stack([X1**i * X2**j for i, j in _MONOMIALS])
    coef, *_ = np.linalg.lstsq(basis, r, rcond=None)
    return {f"x1^{i} x2^{j}": float(c) for (i, j), c in zip(_MONOMIALS, coef) if abs(c) > 1e-9}


def kolmogorov_identity_audit(grid_resolution: int = 201) -> dict:
    """Evaluate both sides of the polynomial identities on a grid over ``[-1, 1]^2``.

    For each identity the report holds ``max_abs_residual`` (``rhs - lhs``),
    its location, the residual table, and a least-squares fit of the
    residual on monomials of degree at most 4 (its algebraic structure).
    """
    if grid_resolution < 2:
        raise ValueError("grid resolution must be >= 2")
    axis = np.linspace(-1.0, 1.0, grid_resolution)
    X1, X2 = np.meshgrid(axis, axis, indexing="ij")
    report = {"grid": axis}
    for name, (lhs, rhs) in _IDENTITIES.items():
        L, R = lhs(X1, X2), rhs(X1, X2)
        res = R - L
        k = int(np.argmax(np.abs(res)))
        report[name] = {
            "max_abs_residual": float(np.abs(res).max()),
            "argmax": (float(X1.ravel()[k]), float(X2.ravel()[k])),
            "residual": res,
            "structure": _monomial_fit(X1.ravel(), X2.ravel(), res.ravel()),
        }
    return report


def identity_sides(name: str, x1: float, x2: float) -> tuple[float, float]:
    lhs, rhs = _IDENTITIES[name]
    return float(lhs(x1, x2)), float(rhs(x1, x2))


# ------------------------------------------------------------- templates


def deep_poly_net_template() -> tuple[Architecture, Architecture]:
    """Deep comparator (9 units, then ten layers of 3) and the one-layer 2048-unit comparator."""
    deep = Architecture((2, 9) + (3,) * 10 + (1,))
    shallow = Architecture((2, 2048, 1))
    return deep, shallow
