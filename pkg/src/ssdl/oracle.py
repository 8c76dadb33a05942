"""Exhaustive posterior over connectivity patterns for tiny networks.

Every pattern with at most ``s_max`` active slots is enumerated and its
evidence ``int L(beta) (1/2)^s d beta`` is computed by quadrature.

For one-hidden-layer networks the output is piecewise linear in any single
coordinate, so the likelihood along that coordinate is a piecewise Gaussian
kernel.  One axis is therefore integrated exactly (up to a 64-node rule on
each smooth piece, which is accurate to ~1e-14), and only the remaining
axes use tensor Gauss-Legendre.  Those axes carry kinks only at zero, so two
panels split at the origin give spectral convergence.  Deeper networks fall
back to plain panelled tensor quadrature.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import logsumexp, roots_legendre

from .inference.data import LOG_2PI, RegressionDataset
from .network import Architecture, InfeasibleSizeError, _index_map, _layer_views, count_params
from .prior import LOG_HALF, PriorHyperParams, log_binom, log_prior_s

__all__ = ["InfeasibleSizeError", "OracleResult", "tiny_posterior_oracle", "enumerate_patterns", "exact_bin_masses"]

MAX_T = 10
MAX_S = 3
_PIECE_NODES = 64
_DECAY_CAP = 36.0  # truncate each piece where the kernel has dropped by e^-36


@lru_cache(maxsize=None)
def _gl(order: int):
    return roots_legendre(order)


def _panel_rule(order: int, edges=(-1.0, 0.0, 1.0)):
    u, w = _gl(order)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(lo + (hi - lo) * (u + 1) / 2)
        ws.append(w * (hi - lo) / 2)
    return np.concatenate(xs), np.concatenate(ws)


def enumerate_patterns(T: int, s_max: int) -> list[tuple[int, ...]]:
    return [c for s in range(s_max + 1) for c in itertools.combinations(range(T), s)]


# ---------------------------------------------------------------- 1-D kernel


def _kernel_moments(kappa, q, ell):
    """``J = int_0^ell exp(-kappa r - q r^2) dr`` and ``K = int_0^ell r exp(...) dr``."""
    u, w = _gl(_PIECE_NODES)
    disc = np.sqrt(kappa * kappa + 4 * _DECAY_CAP * q)
    denom = kappa + disc
    with np.errstate(divide="ignore"):
        r_cut = np.where(denom > 0, 2 * _DECAY_CAP / np.where(denom > 0, denom, 1.0), np.inf)
    le = np.minimum(ell, r_cut)
    r = le[..., None] * (u + 1) / 2
    v = np.exp(-kappa[..., None] * r - q[..., None] * r * r)
    J = (v @ w) * le / 2
    K = ((r * v) @ w) * le / 2
    return J, K


def _gauss_pieces(t0, t1, A, B, y):
    """Integrate ``exp(-0.5 * sum_i (y_i - A_i - B_i t)^2)`` over each piece ``[t0, t1]``.

    ``A, B`` have shape ``(M, pieces, n)``.  Returns the log-integral and the
    conditional mean of ``t`` per piece.  Pieces bounded above by ``e^-60``
    times the largest piece of their row are dropped.
    """
    R0 = y - A - B * t0[..., None]
    rr = np.einsum("...i,...i->...", R0, R0)
    rb = np.einsum("...i,...i->...", R0, B)
    a = np.einsum("...i,...i->...", B, B)

    def E(t):
        u = t - t0
        return -0.5 * (rr - 2 * u * rb + u * u * a)

    def dE(t):
        return rb - (t - t0) * a

    q = 0.5 * a
    d0, d1 = rb, dE(t1)
    interior = (d0 > 0) & (d1 < 0)
    rising = (~interior) & (d0 > 0)  # maximum at the right end
    with np.errstate(divide="ignore", invalid="ignore"):
        tstar = np.where(interior, t0 + rb / np.where(a > 0, a, 1.0), t0)
    tstar = np.clip(tstar, t0, t1)

    anchors = np.stack([np.where(interior, tstar, np.where(rising, t1, t0)), tstar], -1)
    dirs = np.stack([np.where(interior | ~rising, 1.0, -1.0), -np.ones_like(t0)], -1)
    lens = np.stack([np.where(interior, t1 - tstar, t1 - t0), np.where(interior, tstar - t0, 0.0)], -1)
    kaps = np.stack([np.where(interior, 0.0, np.where(rising, d1, -d0)), np.zeros_like(t0)], -1)
    kaps = np.maximum(kaps, 0.0)
    Ea = np.stack([E(anchors[..., 0]), E(anchors[..., 1])], -1)
    with np.errstate(divide="ignore"):
        upper = Ea + np.log(lens)
    row_max = upper.reshape(upper.shape[0], -1).max(axis=1)
    keep = (lens > 0) & (upper >= row_max[:, None, None] - 60.0)

    J = np.zeros_like(lens)
    K = np.zeros_like(lens)
    qs = np.broadcast_to(q[..., None], lens.shape)
    J[keep], K[keep] = _kernel_moments(kaps[keep], qs[keep], lens[keep])
    with np.errstate(divide="ignore", invalid="ignore"):
        logI = np.where(J > 0, Ea + np.log(np.where(J > 0, J, 1.0)), -np.inf)
        tbar = np.where(J > 0, anchors + dirs * K / np.where(J > 0, J, 1.0), anchors)
    log_piece = logsumexp(logI, axis=-1)
    with np.errstate(invalid="ignore"):
        wsub = np.nan_to_num(np.exp(logI - log_piece[..., None]))
    return log_piece, np.einsum("...k,...k->...", wsub, tbar)


# --------------------------------------------------------------- evaluators


def _hidden_parts(arch: Architecture, betas: np.ndarray, X: np.ndarray):
    """One-hidden-layer pieces: pre-activations ``Z (M, m, P)`` and output weights ``v (M, m)``."""
    fmap = _index_map(arch)
    m, p = arch.widths[1], arch.widths[0]
    wb, sb, ob = fmap.weight_block(1), fmap.shift_block(1), fmap.weight_block(2)
    W1 = betas[:, wb.offset : wb.offset + wb.size].reshape(-1, m, p)
    b1 = betas[:, sb.offset : sb.offset + m]
    v = betas[:, ob.offset : ob.offset + m]
    Z = np.einsum("Mkj,ij->Mki", W1, X) - b1[..., None]
    return Z, v


def _batched_forward(arch: Architecture, betas: np.ndarray, X: np.ndarray, clip_bound: float) -> np.ndarray:
    idx = _layer_views(arch, np.arange(betas.shape[1]))
    H = np.broadcast_to(X.T, (betas.shape[0],) + X.T.shape)
    for W_idx, b_idx in idx[:-1]:
        W = betas[:, W_idx]
        H = np.maximum(np.einsum("Mkj,Mji->Mki", W, H) - betas[:, b_idx][..., None], 0.0)
    out = np.einsum("Mkj,Mji->Mki", betas[:, idx[-1][0]], H)[:, 0]
    if math.isfinite(clip_bound):
        out = np.clip(out, -clip_bound, clip_bound)
    return out


def _choose_exact_axis(arch: Architecture, active: tuple[int, ...]) -> int:
    fmap = _index_map(arch)
    pos = {j: fmap.position_of(j) for j in active}
    units: dict[int, list[int]] = {}
    for j, (layer, kind, row, col) in pos.items():
        if layer == 1:
            units.setdefault(row, []).append(j)
    shared = [js for js in units.values() if len(js) > 1]
    if shared:
        js = shared[0]
        shifts = [j for j in js if pos[j][1] == "shift"]
        return shifts[0] if shifts else js[0]
    if units:
        return next(iter(units.values()))[0]
    return active[0]


def _clip_free(arch: Architecture, active: tuple[int, ...], clip_bound: float) -> bool:
    """True when no admissible beta on this pattern can reach the clipping bound."""
    fmap = _index_map(arch)
    pos = [fmap.position_of(j) for j in active]
    incoming = np.zeros(arch.widths[1])
    for layer, _, row, _ in pos:
        if layer == 1:
            incoming[row] += 1
    # |v_k sigma(w.x - b)| <= number of active incoming slots of unit k
    bound = sum(incoming[col] for layer, _, _, col in pos if layer == 2)
    return bound < clip_bound


def _exact_axis_integral(arch, active, data, probes, order, axis_lo=-1.0, axis_hi=1.0, chunk=256):
    """Returns log of ``int lik d beta`` (no slab factor) and probe posterior means."""
    T = count_params(arch)
    t_idx = _choose_exact_axis(arch, active)
    outer = [j for j in active if j != t_idx]
    if outer:
        x1, w1 = _panel_rule(order)
        grids = np.meshgrid(*([x1] * len(outer)), indexing="ij")
        wgrids = np.meshgrid(*([w1] * len(outer)), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], -1)
        logw = np.sum([np.log(g.ravel()) for g in wgrids], axis=0)
    else:
        nodes = np.zeros((1, 0))
        logw = np.zeros(1)

    fmap = _index_map(arch)
    layer, kind, row, col = fmap.position_of(t_idx)
    X = np.vstack([data.xs, probes]) if probes.shape[0] else data.xs
    n, P = data.n, X.shape[0]
    y = data.ys

    node_logZ = np.empty(nodes.shape[0])
    node_mean = np.empty((nodes.shape[0], probes.shape[0]))
    for start in range(0, nodes.shape[0], chunk):
        sl = slice(start, start + chunk)
        M = nodes[sl].shape[0]
        betas = np.zeros((M, T))
        if outer:
            betas[:, outer] = nodes[sl]
        Z, v = _hidden_parts(arch, betas, X)
        H = np.maximum(Z, 0.0)
        f = np.einsum("Mk,Mki->Mi", v, H)
        if layer == 2:
            # output weight: exactly linear, one piece
            A = f[:, None, :]
            Bc = H[:, col, :][:, None, :]
            t0 = np.full((M, 1), axis_lo)
            t1 = np.full((M, 1), axis_hi)
        else:
            alpha = Z[:, row, :]
            beta_t = np.full(P, -1.0) if kind == "shift" else X[:, col]
            beta_t = np.broadcast_to(beta_t, alpha.shape)
            vk = v[:, row][:, None]
            r = f - vk * H[:, row, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = np.where(beta_t != 0, -alpha / np.where(beta_t != 0, beta_t, 1.0), axis_lo)
            tau = np.clip(tau, axis_lo, axis_hi)
            edges = np.sort(
                np.concatenate([np.full((M, 1), axis_lo), tau, np.full((M, 1), axis_hi)], axis=1), axis=1
            )
            t0, t1 = edges[:, :-1], edges[:, 1:]
            mid = 0.5 * (t0 + t1)
            act = (alpha[:, None, :] + beta_t[:, None, :] * mid[..., None]) > 0
            A = r[:, None, :] + (vk * alpha)[:, None, :] * act
            Bc = (vk * beta_t)[:, None, :] * act
        A = np.broadcast_to(A, (M, t0.shape[1], P))
        Bc = np.broadcast_to(Bc, (M, t0.shape[1], P))
        logp, tbar = _gauss_pieces(t0, t1, A[..., :n], Bc[..., :n], y)
        lz = logsumexp(logp, axis=1)
        node_logZ[sl] = lz
        if probes.shape[0]:
            wp = np.exp(logp - lz[:, None])
            fp = A[..., n:] + Bc[..., n:] * tbar[..., None]
            node_mean[sl] = np.einsum("Mk,Mki->Mi", wp, fp)
    tot = node_logZ + logw
    logZ = float(logsumexp(tot))
    wnode = np.exp(tot - logZ)
    mean = wnode @ node_mean if probes.shape[0] else np.zeros(0)
    return logZ - 0.5 * n * LOG_2PI, mean


def _tensor_integral(arch, active, data, probes, order, clip_bound, chunk=4096):
    T = count_params(arch)
    x1, w1 = _panel_rule(order)
    s = len(active)
    X = np.vstack([data.xs, probes]) if probes.shape[0] else data.xs
    n = data.n
    grids = np.meshgrid(*([x1] * s), indexing="ij")
    wgrids = np.meshgrid(*([w1] * s), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], -1)
    logw = np.sum([np.log(g.ravel()) for g in wgrids], axis=0)
    ll = np.empty(nodes.shape[0])
    fp = np.empty((nodes.shape[0], probes.shape[0]))
    for start in range(0, nodes.shape[0], chunk):
        sl = slice(start, start + chunk)
        betas = np.zeros((nodes[sl].shape[0], T))
        betas[:, list(active)] = nodes[sl]
        out = _batched_forward(arch, betas, X, clip_bound)
        r = data.ys - out[:, :n]
        ll[sl] = -0.5 * np.einsum("Mi,Mi->M", r, r)
        fp[sl] = out[:, n:]
    tot = ll + logw
    logZ = float(logsumexp(tot))
    return logZ - 0.5 * n * LOG_2PI, np.exp(tot - logZ) @ fp


# ------------------------------------------------------------------ oracle


@dataclass
class OracleResult:
    arch: Architecture
    patterns: list
    log_evidence: np.ndarray  # log int L(beta) pi(beta | gamma) d beta, per pattern
    log_prior: np.ndarray  # log pi(gamma | s) + log pi(s)
    probs: np.ndarray
    probes: np.ndarray
    pattern_means: np.ndarray  # (patterns, probes)
    order: int
    exact_axis: np.ndarray
    convergence_delta: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return count_params(self.arch)

    def bitstring(self, pattern) -> str:
        bits = ["0"] * self.T
        for j in pattern:
            bits[j] = "1"
        return "".join(bits)

    def pattern_probs(self) -> dict:
        return {self.bitstring(c): float(p) for c, p in zip(self.patterns, self.probs)}

    def sparsity_probs(self) -> np.ndarray:
        out = np.zeros(max(len(c) for c in self.patterns) + 1)
        for c, p in zip(self.patterns, self.probs):
            out[len(c)] += p
        return out

    def posterior_mean(self) -> np.ndarray:
        return self.probs @ self.pattern_means

    def log_marginal(self) -> float:
        return float(logsumexp(self.log_prior + self.log_evidence))


def _validate(arch: Architecture, hyper: PriorHyperParams, s_max: Optional[int]):
    T = count_params(arch)
    if T > MAX_T:
        raise InfeasibleSizeError(f"T = {T} exceeds the enumeration limit {MAX_T}")
    s_max = hyper.s_max if s_max is None else s_max
    if s_max is None:
        raise InfeasibleSizeError("an explicit sparsity cap s_max <= 3 is required")
    if hyper.s_max is not None and hyper.s_max != s_max:
        raise ValueError("s_max disagrees with the prior's sparsity cap")
    if not 0 <= s_max <= MAX_S:
        raise InfeasibleSizeError(f"s_max = {s_max} exceeds {MAX_S}")
    return T, min(s_max, T)


def _run(data, arch, hyper, s_max, probes, order) -> OracleResult:
    T, s_max = _validate(arch, hyper, s_max)
    patterns = enumerate_patterns(T, s_max)
    logev = np.empty(len(patterns))
    means = np.zeros((len(patterns), probes.shape[0]))
    lprior = np.empty(len(patterns))
    exact = np.zeros(len(patterns), dtype=bool)
    for i, c in enumerate(patterns):
        s = len(c)
        lprior[i] = log_prior_s(s, T, hyper.lambda_s, s_max) - log_binom(T, s)
        if s == 0:
            logev[i] = -0.5 * float(data.ys @ data.ys) - 0.5 * data.n * LOG_2PI
            continue
        if arch.depth == 1 and _clip_free(arch, c, hyper.clip_bound):
            lz, mu = _exact_axis_integral(arch, c, data, probes, order)
            exact[i] = True
        else:
            lz, mu = _tensor_integral(arch, c, data, probes, order, hyper.clip_bound)
        logev[i] = lz + s * LOG_HALF
        means[i] = mu
    lw = lprior + logev
    probs = np.exp(lw - logsumexp(lw))
    return OracleResult(arch, patterns, logev, lprior, probs, probes, means, order, exact)


def tiny_posterior_oracle(
    data: RegressionDataset,
    arch: Architecture,
    hyper: PriorHyperParams,
    s_max: Optional[int] = None,
    probes=None,
    order: int = 32,
    check_convergence: bool = True,
) -> OracleResult:
    """Exact posterior over patterns (fixed architecture) and posterior means at ``probes``.

    With ``check_convergence`` the computation is repeated at twice the
    order; the higher-order result is returned and ``convergence_delta``
    holds the largest change in any pattern probability or probe mean.
    """
    if order < 32:
        raise ValueError("quadrature order must be at least 32 per axis")
    probes = np.zeros((0, arch.input_dim)) if probes is None else np.asarray(probes, dtype=float)
    if probes.ndim == 1:
        probes = probes[:, None]
    res = _run(data, arch, hyper, s_max, probes, order)
    if not check_convergence:
        return res
    fine = _run(data, arch, hyper, s_max, probes, 2 * order)
    delta = float(np.max(np.abs(fine.probs - res.probs)))
    if probes.shape[0]:
        delta = max(delta, float(np.max(np.abs(fine.posterior_mean() - res.posterior_mean()))))
    fine.convergence_delta = delta
    fine.extras["coarse"] = res
    return fine


def exact_bin_masses(data: RegressionDataset, arch: Architecture, index: int, edges) -> np.ndarray:
    """Posterior mass of each bin for a single active coordinate (one-hidden-layer nets)."""
    if arch.depth != 1:
        raise ValueError("exact bin masses need a one-hidden-layer architecture")
    edges = np.asarray(edges, dtype=float)
    probes = np.zeros((0, arch.input_dim))
    logs = np.array(
        [_exact_axis_integral(arch, (index,), data, probes, 32, lo, hi)[0] for lo, hi in zip(edges[:-1], edges[1:])]
    )
    return np.exp(logs - logsumexp(logs))
