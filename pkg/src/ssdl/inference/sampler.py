"""Trans-dimensional Metropolis-within-Gibbs for spike-and-slab ReLU networks.

Move set:

* ``beta``   -- reflected Gaussian random walk on one active coordinate;
* ``birth``  -- activate a uniformly chosen inactive slot with a U[-1, 1] value;
* ``death``  -- deactivate a uniformly chosen active slot;
* ``swap``   -- death and birth at fixed sparsity;
* ``grow``   -- ``N -> N + 1`` on a template architecture, new slots inactive;
* ``shrink`` -- ``N -> N - 1`` when every slot unique to the wider net is inactive.

With the uniform slab used as the birth proposal, the slab density and the
pattern-count ratio cancel against the slot-picking probabilities, so a
birth is accepted with probability ``min(1, e^{-lambda_s} q_death/q_birth * LR)``.
"""
from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..network import Architecture, SparseNetwork, count_params, embed_indices, forward_flat, unit_grid
from ..prior import (
    PriorHyperParams,
    log_binom,
    log_prior_N,
    log_prior_joint,
    log_prior_s,
    sparsity_support,
)
from .data import RegressionDataset, gaussian_loglik

__all__ = [
    "SamplerConfig",
    "ChainState",
    "PosteriorSummary",
    "CacheIncoherenceError",
    "init_state",
    "log_posterior",
    "mh_step_beta",
    "mh_step_pattern",
    "mh_step_width",
    "run_chain",
    "reflect",
    "read_records",
]

MOVES = ("beta", "birth", "death", "swap", "grow", "shrink")
LOG_HALF = math.log(0.5)


class CacheIncoherenceError(RuntimeError):
    """The cached log-posterior drifted from a from-scratch recomputation."""


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 20_000
    burn_in: int = 5_000
    thinning: int = 10
    p_beta: float = 0.5
    p_birth: float = 0.15
    p_death: float = 0.15
    p_swap: float = 0.1
    p_grow: float = 0.05
    p_shrink: float = 0.05
    beta_std: float = 0.1
    N_max: int = 64
    seed: int = 0
    audit_every: int = 1000
    checkpoint_every: int = 1000

    def __post_init__(self):
        probs = self.move_probs()
        if any(p < 0 for p in probs.values()):
            raise ValueError("move probabilities must be nonnegative")
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise ValueError("move probabilities must sum to 1")
        if (self.p_birth > 0) != (self.p_death > 0):
            raise ValueError("birth and death must be enabled together")
        if (self.p_grow > 0) != (self.p_shrink > 0):
            raise ValueError("grow and shrink must be enabled together")
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thinning < 1 or self.N_max < 1:
            raise ValueError("thinning and N_max must be positive")
        if not self.beta_std >= 0:
            raise ValueError("beta proposal std must be nonnegative")

    def move_probs(self) -> dict:
        return {m: getattr(self, "p_" + m) for m in MOVES}


@dataclass
class ChainState:
    arch: Architecture
    beta: np.ndarray
    gamma: np.ndarray
    s: int
    log_lik: float
    log_prior: float
    pred: np.ndarray
    rng: np.random.Generator
    adaptive: bool
    iteration: int = 0
    counts: dict = field(default_factory=lambda: {m: [0, 0] for m in MOVES})

    @property
    def N(self) -> Optional[int]:
        return self.arch.width_multiplier if self.adaptive else None

    @property
    def T(self) -> int:
        return self.beta.size

    @property
    def log_post(self) -> float:
        return self.log_lik + self.log_prior

    def net(self, clip_bound: float = math.inf) -> SparseNetwork:
        return SparseNetwork(self.arch, self.gamma.copy(), self.beta.copy(), clip_bound)


def _predict(arch, beta, data, hyper) -> np.ndarray:
    if data.n == 0:
        return np.zeros(0)
    return forward_flat(arch, beta, data.xs, hyper.clip_bound)


def _loglik(pred, data) -> float:
    if data.n == 0:
        return 0.0
    return gaussian_loglik(data.ys - pred)


def log_posterior(state: ChainState, data: RegressionDataset, hyper: PriorHyperParams) -> float:
    """Unnormalised log posterior of the state, recomputed from scratch."""
    net = state.net(hyper.clip_bound)
    lp = log_prior_joint(net, state.N, None, hyper)
    if lp == -math.inf:
        return lp
    return _loglik(_predict(state.arch, state.beta, data, hyper), data) + lp


def init_state(
    data: RegressionDataset,
    arch: Architecture,
    hyper: PriorHyperParams,
    cfg: SamplerConfig,
    net: Optional[SparseNetwork] = None,
    rng: Optional[np.random.Generator] = None,
) -> ChainState:
    """Start from ``net`` (default: the empty network on ``arch``)."""
    adaptive = arch.width_multiplier is not None and cfg.p_grow > 0
    if adaptive and arch.width_multiplier > cfg.N_max:
        raise ValueError("initial width multiplier exceeds N_max")
    if net is None:
        net = SparseNetwork.zeros(arch, hyper.clip_bound)
    elif net.arch != arch:
        raise ValueError("initial network does not match the architecture")
    beta = np.array(net.beta, dtype=float)
    gamma = np.array(net.gamma, dtype=bool)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    lp = log_prior_joint(net, arch.width_multiplier if adaptive else None, None, hyper)
    if lp == -math.inf:
        raise ValueError("initial state has zero prior density")
    pred = _predict(arch, beta, data, hyper)
    return ChainState(arch, beta, gamma, int(gamma.sum()), _loglik(pred, data), lp, pred, rng, adaptive)


def reflect(x: float) -> float:
    """Fold the real line onto [-1, 1] by reflection at the endpoints."""
    y = math.fmod(x + 1.0, 4.0)
    if y < 0:
        y += 4.0
    if y > 2.0:
        y = 4.0 - y
    return y - 1.0


def _accept(state: ChainState, log_a: float) -> bool:
    return log_a >= 0 or state.rng.random() < math.exp(log_a)


def mh_step_beta(state: ChainState, data: RegressionDataset, hyper: PriorHyperParams, cfg: SamplerConfig) -> ChainState:
    state.counts["beta"][0] += 1
    if state.s == 0:
        return state
    active = np.flatnonzero(state.gamma)
    j = int(active[state.rng.integers(active.size)])
    old = state.beta[j]
    new = reflect(old + cfg.beta_std * state.rng.standard_normal())
    state.beta[j] = new
    pred = _predict(state.arch, state.beta, data, hyper)
    ll = _loglik(pred, data)
    if _accept(state, ll - state.log_lik):
        state.log_lik, state.pred = ll, pred
        state.counts["beta"][1] += 1
    else:
        state.beta[j] = old
    return state


def _birth(state, data, hyper, cfg):
    T, s = state.T, state.s
    if s >= sparsity_support(T, hyper.s_max):
        return False
    inactive = np.flatnonzero(~state.gamma)
    j = int(inactive[state.rng.integers(inactive.size)])
    val = state.rng.uniform(-1.0, 1.0)
    state.beta[j] = val
    pred = _predict(state.arch, state.beta, data, hyper)
    ll = _loglik(pred, data)
    log_a = ll - state.log_lik - hyper.lambda_s + math.log(cfg.p_death / cfg.p_birth)
    if _accept(state, log_a):
        state.gamma[j] = True
        state.s = s + 1
        state.log_prior += LOG_HALF + math.log((s + 1) / (T - s)) - hyper.lambda_s
        state.log_lik, state.pred = ll, pred
        return True
    state.beta[j] = 0.0
    return False


def _death(state, data, hyper, cfg):
    T, s = state.T, state.s
    if s == 0:
        return False
    active = np.flatnonzero(state.gamma)
    j = int(active[state.rng.integers(active.size)])
    old = state.beta[j]
    state.beta[j] = 0.0
    pred = _predict(state.arch, state.beta, data, hyper)
    ll = _loglik(pred, data)
    log_a = ll - state.log_lik + hyper.lambda_s + math.log(cfg.p_birth / cfg.p_death)
    if _accept(state, log_a):
        state.gamma[j] = False
        state.s = s - 1
        state.log_prior += -LOG_HALF + math.log((T - s + 1) / s) + hyper.lambda_s
        state.log_lik, state.pred = ll, pred
        return True
    state.beta[j] = old
    return False


def _swap(state, data, hyper, cfg):
    if state.s == 0 or state.s == state.T:
        return False
    active = np.flatnonzero(state.gamma)
    inactive = np.flatnonzero(~state.gamma)
    j = int(active[state.rng.integers(active.size)])
    k = int(inactive[state.rng.integers(inactive.size)])
    old = state.beta[j]
    val = state.rng.uniform(-1.0, 1.0)
    state.beta[j] = 0.0
    state.beta[k] = val
    pred = _predict(state.arch, state.beta, data, hyper)
    ll = _loglik(pred, data)
    if _accept(state, ll - state.log_lik):
        state.gamma[j] = False
        state.gamma[k] = True
        state.log_lik, state.pred = ll, pred
        return True
    state.beta[k] = 0.0
    state.beta[j] = old
    return False


_PATTERN_MOVES = {"birth": _birth, "death": _death, "swap": _swap}


def mh_step_pattern(
    state: ChainState, data: RegressionDataset, hyper: PriorHyperParams, cfg: SamplerConfig, kind: str
) -> ChainState:
    """One birth, death or swap proposal."""
    state.counts[kind][0] += 1
    if _PATTERN_MOVES[kind](state, data, hyper, cfg):
        state.counts[kind][1] += 1
    return state


def _log_width_prior(arch: Architecture, s: int, hyper: PriorHyperParams) -> float:
    # terms of the joint prior that depend on N at fixed (s, active values)
    T = count_params(arch)
    if s > sparsity_support(T, hyper.s_max):
        return -math.inf
    return (
        log_prior_N(arch.width_multiplier, hyper.lambda_N)
        + log_prior_s(s, T, hyper.lambda_s, hyper.s_max)
        - log_binom(T, s)
    )


def mh_step_width(
    state: ChainState, data: RegressionDataset, hyper: PriorHyperParams, cfg: SamplerConfig, kind: str
) -> ChainState:
    """Grow-embedding or shrink proposal on the width multiplier."""
    state.counts[kind][0] += 1
    if not state.adaptive:
        return state
    N = state.arch.width_multiplier
    if kind == "grow":
        if N >= cfg.N_max:
            return state
        small, big = state.arch, state.arch.with_multiplier(N + 1)
        correction = math.log(cfg.p_shrink / cfg.p_grow)
        new_arch = big
    else:
        if N <= 1:
            return state
        small, big = state.arch.with_multiplier(N - 1), state.arch
        correction = math.log(cfg.p_grow / cfg.p_shrink)
        new_arch = small
    idx = embed_indices(small, big)
    if kind == "shrink":
        kept = np.zeros(big.n_params, dtype=bool)
        kept[idx] = True
        if state.gamma[~kept].any():
            return state
    d_prior = _log_width_prior(new_arch, state.s, hyper) - _log_width_prior(state.arch, state.s, hyper)
    if not _accept(state, d_prior + correction):
        return state
    if kind == "grow":
        beta = np.zeros(big.n_params)
        gamma = np.zeros(big.n_params, dtype=bool)
        beta[idx] = state.beta
        gamma[idx] = state.gamma
    else:
        beta = state.beta[idx].copy()
        gamma = state.gamma[idx].copy()
    state.arch, state.beta, state.gamma = new_arch, beta, gamma
    state.log_prior += d_prior
    state.counts[kind][1] += 1
    return state


@dataclass
class PosteriorSummary:
    """Thinned post-burn-in draws plus derived statistics."""

    base_arch: Architecture
    adaptive: bool
    probes: np.ndarray
    iterations: list = field(default_factory=list)
    Ns: list = field(default_factory=list)
    ss: list = field(default_factory=list)
    log_posts: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    probe_preds: list = field(default_factory=list)
    unclipped_sup: list = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)
    clip_bound: float = math.inf
    final_state: Optional[ChainState] = None

    @property
    def n_draws(self) -> int:
        return len(self.iterations)

    def arch_of(self, i: int) -> Architecture:
        if self.adaptive:
            return self.base_arch.with_multiplier(self.Ns[i])
        return self.base_arch

    def network(self, i: int) -> SparseNetwork:
        arch = self.arch_of(i)
        beta = np.zeros(count_params(arch))
        beta[self.gammas[i]] = self.betas[i]
        gamma = np.zeros(beta.size, dtype=bool)
        gamma[self.gammas[i]] = True
        return SparseNetwork(arch, gamma, beta, self.clip_bound)

    def predictions(self) -> np.ndarray:
        """``(draws, probes)`` array of network outputs."""
        if not self.probe_preds:
            return np.zeros((0, self.probes.shape[0]))
        return np.vstack(self.probe_preds)

    def mean_prediction(self) -> np.ndarray:
        return self.predictions().mean(axis=0)

    def pattern_frequencies(self) -> dict:
        """Relative frequency of each pattern, keyed by bitstring (fixed architecture)."""
        counts = Counter()
        for i in range(self.n_draws):
            T = count_params(self.arch_of(i))
            bits = np.zeros(T, dtype=np.uint8)
            bits[self.gammas[i]] = 1
            counts[bits.tobytes()] += 1
        total = self.n_draws
        return {"".join(map(str, np.frombuffer(k, dtype=np.uint8))): v / total for k, v in counts.items()}

    def quantiles(self, which: str, qs=(0.05, 0.5, 0.95)) -> list:
        vals = np.asarray(self.Ns if which == "N" else self.ss, dtype=float)
        if vals.size == 0 or (which == "N" and not self.adaptive):
            return [math.nan] * len(qs)
        return [float(v) for v in np.quantile(vals, qs)]

    def sup_exceed_fraction(self) -> float:
        if not self.unclipped_sup:
            return 0.0
        return float(np.mean(np.asarray(self.unclipped_sup) > self.clip_bound))


def _audit(state, data, hyper):
    fresh = log_posterior(state, data, hyper)
    if not abs(fresh - state.log_post) <= 1e-8 * max(1.0, abs(fresh)):
        raise CacheIncoherenceError(
            f"cached log posterior {state.log_post!r} != recomputed {fresh!r} at iteration {state.iteration}"
        )


def _format_record(state: ChainState) -> str:
    active = np.flatnonzero(state.gamma)
    bits = "".join("1" if g else "0" for g in state.gamma)
    N = "-" if state.N is None else str(state.N)
    vals = ",".join(repr(float(state.beta[j])) for j in active)
    return f"{state.iteration}\t{N}\t{state.s}\t{state.log_post!r}\t{bits}\t{vals}\n"


def read_records(path) -> list[dict]:
    """Parse an append-only draw file."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            it, N, s, lp, bits, vals = line.rstrip("\n").split("\t")
            out.append(
                {
                    "iteration": int(it),
                    "N": None if N == "-" else int(N),
                    "s": int(s),
                    "log_post": float(lp),
                    "gamma": np.array([c == "1" for c in bits], dtype=bool),
                    "beta": np.array([float(v) for v in vals.split(",")]) if vals else np.zeros(0),
                }
            )
    return out


def _checkpoint_path(record_path: Path) -> Path:
    return record_path.with_name(record_path.name + ".ckpt.json")


def _write_checkpoint(state: ChainState, record_path: Path):
    doc = {
        "iteration": state.iteration,
        "widths": list(state.arch.widths),
        "width_multiplier": state.arch.width_multiplier,
        "gamma": "".join("1" if g else "0" for g in state.gamma),
        "beta": {str(j): repr(float(state.beta[j])) for j in np.flatnonzero(state.gamma)},
        "log_lik": repr(state.log_lik),
        "log_prior": repr(state.log_prior),
        "counts": state.counts,
        "rng": state.rng.bit_generator.state,
    }
    path = _checkpoint_path(record_path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc))
    os.replace(tmp, path)


def _load_checkpoint(path: Path, data, hyper, cfg) -> ChainState:
    doc = json.loads(path.read_text())
    arch = Architecture(tuple(doc["widths"]), doc["width_multiplier"])
    T = count_params(arch)
    gamma = np.array([c == "1" for c in doc["gamma"]], dtype=bool)
    beta = np.zeros(T)
    for j, v in doc["beta"].items():
        beta[int(j)] = float(v)
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng"]
    adaptive = arch.width_multiplier is not None and cfg.p_grow > 0
    pred = _predict(arch, beta, data, hyper)
    state = ChainState(
        arch, beta, gamma, int(gamma.sum()), float(doc["log_lik"]), float(doc["log_prior"]), pred, rng, adaptive
    )
    state.iteration = int(doc["iteration"])
    state.counts = {k: list(v) for k, v in doc["counts"].items()}
    return state


def _record(summary: PosteriorSummary, state: ChainState, data, hyper, sup_grid):
    summary.iterations.append(state.iteration)
    summary.Ns.append(state.N)
    summary.ss.append(state.s)
    summary.log_posts.append(state.log_post)
    active = np.flatnonzero(state.gamma)
    summary.gammas.append(active)
    summary.betas.append(state.beta[active].copy())
    if summary.probes is data.xs:
        summary.probe_preds.append(state.pred.copy())
    else:
        summary.probe_preds.append(forward_flat(state.arch, state.beta, summary.probes, hyper.clip_bound))
    if sup_grid is not None:
        raw = forward_flat(state.arch, state.beta, sup_grid)
        summary.unclipped_sup.append(float(np.max(np.abs(raw))))


def run_chain(
    data: RegressionDataset,
    arch: Architecture,
    hyper: PriorHyperParams,
    cfg: SamplerConfig,
    probes: Optional[np.ndarray] = None,
    init: Optional[SparseNetwork] = None,
    record_path=None,
    resume: bool = False,
    stop_after: Optional[int] = None,
    sup_grid_resolution: Optional[int] = 33,
) -> PosteriorSummary:
    """Run one chain and collect thinned draws after burn-in.

    Moves are cycled at random with the configured probabilities; width moves
    are dropped (and the rest renormalised) unless ``arch`` is a template.
    ``probes`` default to the design points.  With ``record_path`` every kept
    draw is appended to that file and a checkpoint is refreshed every
    ``cfg.checkpoint_every`` iterations; ``resume=True`` continues from it.
    ``stop_after`` halts after that many total iterations (for staged runs).
    """
    probes = data.xs if probes is None else np.asarray(probes, dtype=float)
    sup_grid = None
    if sup_grid_resolution and arch.input_dim <= 2:
        sup_grid = unit_grid(arch.input_dim, sup_grid_resolution)
    record_path = Path(record_path) if record_path is not None else None
    state = None
    summary = None
    if resume and record_path is not None and _checkpoint_path(record_path).exists():
        state = _load_checkpoint(_checkpoint_path(record_path), data, hyper, cfg)
        summary = _rebuild_summary(record_path, state, arch, data, hyper, probes, sup_grid)
    if state is None:
        state = init_state(data, arch, hyper, cfg, init)
        summary = PosteriorSummary(arch, state.adaptive, probes, clip_bound=hyper.clip_bound)
        if record_path is not None:
            record_path.parent.mkdir(parents=True, exist_ok=True)
            record_path.write_text("")

    probs = cfg.move_probs()
    if not state.adaptive:
        probs["grow"] = probs["shrink"] = 0.0
    names = [m for m in MOVES if probs[m] > 0]
    cum = np.cumsum([probs[m] for m in names])
    cum /= cum[-1]

    fh = open(record_path, "a") if record_path is not None else None
    end = cfg.iterations if stop_after is None else min(cfg.iterations, stop_after)
    try:
        while state.iteration < end:
            move = names[int(np.searchsorted(cum, state.rng.random(), side="right"))]
            if move == "beta":
                mh_step_beta(state, data, hyper, cfg)
            elif move in _PATTERN_MOVES:
                mh_step_pattern(state, data, hyper, cfg, move)
            else:
                mh_step_width(state, data, hyper, cfg, move)
            state.iteration += 1
            it = state.iteration
            if cfg.audit_every and it % cfg.audit_every == 0:
                _audit(state, data, hyper)
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
                _record(summary, state, data, hyper, sup_grid)
                if fh is not None:
                    fh.write(_format_record(state))
            if fh is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                fh.flush()
                _write_checkpoint(state, record_path)
        if fh is not None:
            fh.flush()
            _write_checkpoint(state, record_path)
    finally:
        if fh is not None:
            fh.close()
    _audit(state, data, hyper)
    summary.acceptance = {m: (a / p if p else math.nan) for m, (p, a) in state.counts.items()}
    summary.final_state = state
    return summary


def _rebuild_summary(record_path, state, arch, data, hyper, probes, sup_grid) -> PosteriorSummary:
    # drop draws written after the checkpoint, then re-derive probe predictions
    lines = [ln for ln in record_path.read_text().splitlines(keepends=True) if ln.strip()]
    kept = [ln for ln in lines if int(ln.split("\t", 1)[0]) <= state.iteration]
    record_path.write_text("".join(kept))
    summary = PosteriorSummary(arch, state.adaptive, probes, clip_bound=hyper.clip_bound)
    for rec in read_records(record_path):
        a = arch.with_multiplier(rec["N"]) if state.adaptive else arch
        beta = np.zeros(count_params(a))
        active = np.flatnonzero(rec["gamma"])
        beta[active] = rec["beta"]
        summary.iterations.append(rec["iteration"])
        summary.Ns.append(rec["N"])
        summary.ss.append(rec["s"])
        summary.log_posts.append(rec["log_post"])
        summary.gammas.append(active)
        summary.betas.append(rec["beta"])
        summary.probe_preds.append(forward_flat(a, beta, probes, hyper.clip_bound))
        if sup_grid is not None:
            summary.unclipped_sup.append(float(np.max(np.abs(forward_flat(a, beta, sup_grid)))))
    return summary
