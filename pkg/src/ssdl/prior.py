"""Spike-and-slab prior hierarchy over sparse ReLU networks.

Coefficients: point mass at zero or uniform on [-1, 1] (density 1/2).
Patterns: uniform over the ``C(T, s)`` patterns of size ``s``.
Sparsity: ``pi(s) ~ exp(-lambda_s * s)`` on ``{0, ..., T}`` (optionally capped).
Width multiplier: ``pi(N) = lambda^N / ((e^lambda - 1) N!)`` for ``N >= 1``.

The spike is bookkept against counting measure, so an inactive coordinate
adds 0 to the log-density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .network import Architecture, SparseNetwork, count_params

__all__ = [
    "PriorHyperParams",
    "PriorDraw",
    "log_prior_beta_given_gamma",
    "log_prior_gamma_given_s",
    "log_prior_N",
    "log_prior_s",
    "log_binom",
    "prior_N_probs",
    "prior_s_probs",
    "sparsity_support",
    "log_prior_joint",
    "sample_prior",
]

LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class PriorHyperParams:
    lambda_N: float = 1.0
    lambda_s: float = 1.0
    clip_bound: float = 10.0
    # optional cap on the support of s; None means the full {0, ..., T}
    s_max: Optional[int] = None

    def __post_init__(self):
        if not self.lambda_N > 0:
            raise ValueError("lambda_N must be positive")
        if not self.lambda_s > 0:
            raise ValueError("lambda_s must be positive")
        if not self.clip_bound > 0:
            raise ValueError("clip bound F must be positive")
        if self.s_max is not None and self.s_max < 0:
            raise ValueError("s_max must be nonnegative")

    @property
    def slab_support(self) -> tuple[float, float]:
        return (-1.0, 1.0)


def log_binom(T: int, s: int) -> float:
    return float(gammaln(T + 1) - gammaln(s + 1) - gammaln(T - s + 1))


def sparsity_support(T: int, s_max: Optional[int] = None) -> int:
    """Largest admissible sparsity."""
    return T if s_max is None else min(T, s_max)


def log_prior_beta_given_gamma(beta, gamma) -> float:
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=bool)
    if beta.shape != gamma.shape:
        raise ValueError("beta and gamma must have the same length")
    if np.any(beta[~gamma] != 0):
        raise ValueError("beta must vanish on inactive coordinates")
    active = beta[gamma]
    if np.any(np.abs(active) > 1):
        return -math.inf
    return active.size * LOG_HALF


def log_prior_gamma_given_s(gamma, T: Optional[int] = None) -> float:
    gamma = np.asarray(gamma, dtype=bool)
    T = gamma.size if T is None else T
    s = int(gamma.sum())
    if not 0 <= s <= T:
        raise ValueError("pattern size outside [0, T]")
    return -log_binom(T, s)


def log_prior_N(N: int, lambda_N: float) -> float:
    if N < 1 or int(N) != N:
        raise ValueError("the width multiplier prior is supported on N = 1, 2, ...")
    return N * math.log(lambda_N) - math.log(math.expm1(lambda_N)) - math.lgamma(N + 1)


def _log_geometric_norm(K: int, lambda_s: float) -> float:
    # log sum_{k=0}^{K} exp(-lambda_s k)
    if lambda_s == 0:
        return math.log(K + 1)
    if lambda_s > 0:
        return math.log1p(-math.exp(-lambda_s * (K + 1))) - math.log1p(-math.exp(-lambda_s))
    # increasing weights: factor out the largest term
    return -lambda_s * K + _log_geometric_norm(K, -lambda_s)


def log_prior_s(s: int, T: int, lambda_s: float, s_max: Optional[int] = None) -> float:
    K = sparsity_support(T, s_max)
    if not 0 <= s <= K:
        raise ValueError(f"sparsity {s} outside support [0, {K}]")
    return -lambda_s * s - _log_geometric_norm(K, lambda_s)


def prior_s_probs(T: int, lambda_s: float, s_max: Optional[int] = None) -> np.ndarray:
    K = sparsity_support(T, s_max)
    k = np.arange(K + 1)
    return np.exp(-lambda_s * k - _log_geometric_norm(K, lambda_s))


def prior_N_probs(lambda_N: float, N_max: int) -> tuple[np.ndarray, float]:
    """Probabilities of ``N = 1..N_max`` renormalised, plus the truncated tail mass."""
    Ns = np.arange(1, N_max + 1)
    logp = Ns * math.log(lambda_N) - math.log(math.expm1(lambda_N)) - gammaln(Ns + 1)
    p = np.exp(logp)
    tail = max(0.0, 1.0 - float(p.sum()))
    return p / p.sum(), tail


def log_prior_joint(
    net: SparseNetwork,
    N: Optional[int],
    s: Optional[int],
    hyper: PriorHyperParams,
) -> float:
    """Sum of the slab, pattern, sparsity and (when ``N`` is given) width log-priors."""
    T = net.n_params
    s_net = int(net.gamma.sum())
    if s is not None and s != s_net:
        raise ValueError(f"declared sparsity {s} != popcount(gamma) {s_net}")
    if N is not None and net.arch.width_multiplier not in (None, N):
        raise ValueError("declared N disagrees with the architecture")
    if s_net > sparsity_support(T, hyper.s_max):
        return -math.inf
    lp = log_prior_beta_given_gamma(net.beta, net.gamma)
    if lp == -math.inf:
        return lp
    lp += log_prior_gamma_given_s(net.gamma, T)
    lp += log_prior_s(s_net, T, hyper.lambda_s, hyper.s_max)
    if N is not None:
        lp += log_prior_N(N, hyper.lambda_N)
    return lp


@dataclass(frozen=True)
class PriorDraw:
    net: SparseNetwork
    N: Optional[int]
    s: int


def sample_prior(
    arch: Architecture,
    hyper: PriorHyperParams,
    rng_seed,
    adaptive: bool = False,
    N_max: int = 64,
    s: Optional[int] = None,
) -> PriorDraw:
    """Exact draw from the hierarchy.

    With ``adaptive=True`` (template architectures only) ``N`` is drawn from its
    prior truncated at ``N_max`` and the architecture is rebuilt.  Passing ``s``
    fixes the sparsity instead of drawing it.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    N = arch.width_multiplier
    if adaptive:
        if N is None:
            raise ValueError("the adaptive hierarchy needs a template architecture")
        probs, _ = prior_N_probs(hyper.lambda_N, N_max)
        N = int(rng.choice(np.arange(1, N_max + 1), p=probs))
        arch = arch.with_multiplier(N)
    T = count_params(arch)
    if s is None:
        probs = prior_s_probs(T, hyper.lambda_s, hyper.s_max)
        s = int(rng.choice(probs.size, p=probs / probs.sum()))
    elif not 0 <= s <= T:
        raise ValueError("fixed sparsity outside [0, T]")
    gamma = np.zeros(T, dtype=bool)
    active = rng.choice(T, size=s, replace=False)
    gamma[active] = True
    beta = np.zeros(T)
    beta[np.sort(active)] = rng.uniform(-1.0, 1.0, size=s)
    return PriorDraw(SparseNetwork(arch, gamma, beta, hyper.clip_bound), N, s)
