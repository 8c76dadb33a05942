"""Synthetic experiments: target functions, datasets, oracle checks, rate study, deep vs shallow."""
from __future__ import annotations

import csv
import io
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .approx import deep_poly_net_template
from .inference import (
    DivergenceError,
    PosteriorSummary,
    RegressionDataset,
    SamplerConfig,
    empirical_l2,
    map_sgd_train,
    run_chain,
)
from .network import Architecture, unit_grid
from .oracle import tiny_posterior_oracle
from .plots import histogram_plot, loglog_plot
from .prior import PriorHyperParams
from .seeding import child_rng, child_seed
from .theory import ProblemSpec, depth_L_star, rate_eps_n, sieve_sizes

__all__ = [
    "HolderTarget",
    "target_library",
    "get_target",
    "make_dataset",
    "canonical_tiny_instance",
    "total_variation",
    "OracleCheckConfig",
    "oracle_check",
    "neighborhood_mass",
    "overfit_check",
    "overfit_masses",
    "RateStudyConfig",
    "RateStudyResult",
    "rate_study",
    "DeepShallowConfig",
    "deep_vs_shallow",
    "REFERENCE_MSE",
]


# ------------------------------------------------------------------ targets


@dataclass(frozen=True, eq=False)
class HolderTarget:
    """A regression function on ``[0, 1]^p`` with a certified Holder-norm bound.

    The norm convention: sup norm plus, for ``k`` the largest integer strictly
    below ``alpha``, the sup of derivatives up to order ``k`` and the Holder
    seminorm of order ``alpha - k`` of the ``k``-th derivatives.
    """

    f0: Callable[[np.ndarray], np.ndarray]
    alpha: float
    holder_norm: float
    sup_bound: float
    name: str
    p: int
    derivation: str = ""

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.p == 1 else X[None, :]
        if X.shape[1] != self.p:
            raise ValueError(f"{self.name} takes {self.p}-dimensional inputs")
        return np.asarray(self.f0(X), dtype=float).reshape(-1)


def _f1_raw(u1, u2):
    return (u1**2 * u2**2 - u1**2 * u2 + 1.0) ** 2


def _f1(X):
    # [0,1]^2 -> [-1,1]^2
    return _f1_raw(2 * X[:, 0] - 1, 2 * X[:, 1] - 1)


def _bump(X):
    return np.exp(-8.0 * ((X[:, 0] - 0.5) ** 2 + (X[:, 1] - 0.5) ** 2))


def target_library() -> list[HolderTarget]:
    return [
        HolderTarget(
            _f1,
            1.0,
            69.0,
            9.0,
            "f1",
            2,
            "polynomial on [-1,1]^2 mapped from the unit square by u = 2x - 1; "
            "|h| <= 3 for h = u1^2 u2^2 - u1^2 u2 + 1, so |f| <= 9 (attained at u = (1,-1)); "
            "|d/du1 f| <= 2*3*4, |d/du2 f| <= 2*3*3, gradient norm <= 30 in u, <= 60 in x; norm <= 9 + 60",
        ),
        HolderTarget(
            lambda X: np.abs(X[:, 0] - 0.5),
            1.0,
            1.5,
            0.5,
            "cusp_1",
            1,
            "sup 1/2 plus Lipschitz constant 1",
        ),
        HolderTarget(
            lambda X: np.sqrt(np.abs(X[:, 0] - 0.5)),
            0.5,
            math.sqrt(0.5) + 1.0,
            math.sqrt(0.5),
            "cusp_0.5",
            1,
            "sup sqrt(1/2) plus 1/2-Holder seminorm 1 (|sqrt a - sqrt b| <= sqrt|a - b|, equality at the cusp)",
        ),
        HolderTarget(
            _bump,
            1.0,
            1.0 + 4.0 * math.exp(-0.5),
            1.0,
            "bump2d",
            2,
            "exp(-8 r^2): sup 1; |gradient| = 16 r exp(-8 r^2) peaks at r = 1/4 with value 4 e^(-1/2)",
        ),
        HolderTarget(lambda X: np.zeros(X.shape[0]), 1.0, 0.0, 0.0, "zero", 1, "identically zero"),
    ]


def get_target(name: str) -> HolderTarget:
    for t in target_library():
        if t.name == name:
            return t
    raise KeyError(f"unknown target {name!r}; choose from {[t.name for t in target_library()]}")


def make_dataset(
    target: HolderTarget, n: int, design: str = "grid", seed: int = 0, noise: bool = True
) -> RegressionDataset:
    """Fixed design in the unit cube with ``y = f0(x) + N(0, 1)`` (or noiseless)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = target.p
    if design == "grid":
        k = round(n ** (1.0 / p))
        if k**p != n:
            raise ValueError(f"grid design needs n to be a perfect {p}-th power, got {n}")
        xs = unit_grid(p, k)
    elif design == "uniform":
        xs = child_rng(seed, "design").random((n, p))
    else:
        raise ValueError(f"unknown design {design!r}")
    ys = target(xs)
    if noise:
        ys = ys + child_rng(seed, "noise").standard_normal(n)
    return RegressionDataset(xs, ys)


# ------------------------------------------------------------ oracle check


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def canonical_tiny_instance(seed: int = 1):
    """Six-slot network ``(1, 2, 1)``, ``s <= 3``, 50 noisy grid observations of ``|x - 1/2|``."""
    data = make_dataset(get_target("cusp_1"), 50, "grid", seed)
    arch = Architecture((1, 2, 1))
    hyper = PriorHyperParams(s_max=3)
    probes = np.linspace(0.0, 1.0, 5)[:, None]
    return data, arch, hyper, probes


@dataclass(frozen=True)
class OracleCheckConfig:
    data_seed: int = 1
    draws: int = 100_000
    burn_in: int = 5_000
    thinning: int = 1
    seed: int = 0
    beta_std: float = 0.1
    order: int = 32
    tv_tolerance: float = 0.05
    mean_tolerance: float = 0.02


def oracle_check(cfg: OracleCheckConfig = OracleCheckConfig(), out_dir=None) -> dict:
    """Compare the sampler's pattern marginal and probe means with the exhaustive oracle."""
    data, arch, hyper, probes = canonical_tiny_instance(cfg.data_seed)
    oracle = tiny_posterior_oracle(data, arch, hyper, probes=probes, order=cfg.order)
    scfg = SamplerConfig(
        iterations=cfg.burn_in + cfg.draws * cfg.thinning,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        beta_std=cfg.beta_std,
        seed=child_seed(cfg.seed, "oracle-chain"),
    )
    summary = run_chain(data, arch, hyper, scfg, probes=probes, sup_grid_resolution=None)
    mc = summary.pattern_frequencies()
    tv = total_variation(mc, oracle.pattern_probs())
    mean_gap = float(np.max(np.abs(summary.mean_prediction() - oracle.posterior_mean())))
    report = {
        "T": oracle.T,
        "patterns": len(oracle.patterns),
        "draws": summary.n_draws,
        "tv": tv,
        "tv_ok": tv <= cfg.tv_tolerance,
        "probe_mean_gap": mean_gap,
        "probe_mean_ok": mean_gap <= cfg.mean_tolerance,
        "quadrature_order": oracle.order,
        "convergence_delta": oracle.convergence_delta,
        "oracle_probs": oracle.pattern_probs(),
        "chain_freqs": dict(sorted(mc.items())),
        "oracle_mean": oracle.posterior_mean().tolist(),
        "chain_mean": summary.mean_prediction().tolist(),
        "acceptance": {k: (None if math.isnan(v) else v) for k, v in summary.acceptance.items()},
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle_check.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return report


# ------------------------------------------------------- posterior summaries


def _prediction_matrix(draws, xs) -> np.ndarray:
    if isinstance(draws, PosteriorSummary):
        if draws.probes.shape != np.asarray(xs).shape or not np.array_equal(draws.probes, xs):
            raise ValueError("summary probes differ from the evaluation points")
        return draws.predictions()
    if callable(draws[0]) if len(draws) else False:
        return np.vstack([np.asarray(d(xs), dtype=float) for d in draws])
    return np.atleast_2d(np.asarray(draws, dtype=float))


def neighborhood_mass(draws, f0, xs, eps: float, M: float) -> float:
    """Fraction of draws within empirical L2 distance ``M * eps`` of ``f0`` on ``xs``.

    ``draws`` is a ``(draws, points)`` array of function values at ``xs``, a
    list of callables, or a summary whose probes are ``xs``.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    preds = _prediction_matrix(draws, xs)
    if preds.shape[0] == 0:
        raise ValueError("need at least one draw")
    truth = np.asarray(f0(xs) if callable(f0) else f0, dtype=float)
    dist = np.sqrt(np.mean((preds - truth) ** 2, axis=1))
    return float(np.mean(dist <= M * eps))


def overfit_masses(Ns, ss, N_n: int, s_n: int) -> tuple[float, float]:
    Ns, ss = np.asarray(Ns), np.asarray(ss)
    if Ns.size == 0:
        raise ValueError("need at least one draw")
    return float(np.mean(Ns > N_n)), float(np.mean(ss > s_n))


def overfit_check(draws, n: int, problem: ProblemSpec, L_star: Optional[int] = None) -> tuple[float, float]:
    """Posterior fractions of draws with ``N > N_n`` and ``s > s_n``."""
    N_n, s_n = sieve_sizes(n, problem.alpha, problem.p, problem.delta, problem.C_tilde_N, L_star)
    if isinstance(draws, PosteriorSummary):
        return overfit_masses(draws.Ns, draws.ss, N_n, s_n)
    Ns, ss = draws
    return overfit_masses(Ns, ss, N_n, s_n)


# ---------------------------------------------------------------- rate study


@dataclass(frozen=True)
class RateStudyConfig:
    target: str = "cusp_1"
    n_list: tuple = (128, 512, 2048)
    replicates: int = 10
    design: str = "grid"
    noise: bool = True
    M: float = 2.0
    delta: float = 1.5
    C_tilde_N: float = 1.0
    depth: Optional[int] = None  # None: the theory depth for each n
    N_init: int = 1
    lambda_N: float = 1.0
    lambda_s: float = 1.0
    clip_bound: float = 10.0
    iterations: int = 20_000
    burn_in: int = 5_000
    thinning: int = 10
    beta_std: float = 0.1
    N_max: int = 64
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if list(self.n_list) != sorted(set(self.n_list)):
            raise ValueError("n_list must be strictly increasing")
        if self.replicates < 3:
            raise ValueError("need at least 3 replicates")

    def hyper(self) -> PriorHyperParams:
        return PriorHyperParams(self.lambda_N, self.lambda_s, self.clip_bound)

    def sampler(self, seed: int) -> SamplerConfig:
        return SamplerConfig(
            iterations=self.iterations,
            burn_in=self.burn_in,
            thinning=self.thinning,
            beta_std=self.beta_std,
            N_max=self.N_max,
            seed=seed,
        )


CELL_FIELDS = [
    "n",
    "replicate",
    "status",
    "depth",
    "d_n",
    "eps_n",
    "mass",
    "N_q05",
    "N_q50",
    "N_q95",
    "s_q05",
    "s_q50",
    "s_q95",
    "N_n",
    "s_n",
    "mass_N_exceed",
    "mass_s_exceed",
    "sup_exceed",
]


def _run_cell(cfg: RateStudyConfig, n: int, r: int) -> dict:
    t0 = time.perf_counter()
    target = get_target(cfg.target)
    row = {"n": n, "replicate": r}
    try:
        data = make_dataset(target, n, cfg.design, child_seed(cfg.seed, "data", n, r), cfg.noise)
        L = cfg.depth if cfg.depth is not None else depth_L_star(n, target.p)
        arch = Architecture.template(target.p, cfg.N_init, L)
        summary = run_chain(data, arch, cfg.hyper(), cfg.sampler(child_seed(cfg.seed, "chain", n, r)))
        truth = target(data.xs)
        eps = rate_eps_n(n, target.alpha, target.p, cfg.delta)
        N_n, s_n = sieve_sizes(n, target.alpha, target.p, cfg.delta, cfg.C_tilde_N, L)
        mN, ms = overfit_masses(summary.Ns, summary.ss, N_n, s_n)
        Nq = summary.quantiles("N")
        sq = summary.quantiles("s")
        row.update(
            status="ok",
            depth=L,
            d_n=empirical_l2(summary.mean_prediction(), truth, data.xs),
            eps_n=eps,
            mass=neighborhood_mass(summary.predictions(), truth, data.xs, eps, cfg.M),
            N_q05=Nq[0], N_q50=Nq[1], N_q95=Nq[2],
            s_q05=sq[0], s_q50=sq[1], s_q95=sq[2],
            N_n=N_n, s_n=s_n, mass_N_exceed=mN, mass_s_exceed=ms,
            sup_exceed=summary.sup_exceed_fraction(),
            Ns=[int(v) for v in summary.Ns],
            ss=[int(v) for v in summary.ss],
        )
    except Exception as exc:  # a failed cell is reported, the study goes on
        row.update(status=f"failed: {type(exc).__name__}: {exc}", traceback=traceback.format_exc())
    row["runtime"] = time.perf_counter() - t0
    return row


def _cell_path(out: Path, n: int, r: int) -> Path:
    return out / "cells" / f"n{n}_r{r}.json"


@dataclass
class RateStudyResult:
    config: RateStudyConfig
    rows: list
    slope: float
    slope_stderr: float
    theory_slope: float
    medians: dict
    strictly_decreasing: bool
    decreasing_replicate_sets: int
    overfit_at_largest_n: tuple
    alpha_below_p: bool

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CELL_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in CELL_FIELDS})
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "target": self.config.target,
            "n_list": list(self.config.n_list),
            "replicates": self.config.replicates,
            "median_d_n": {str(k): v for k, v in self.medians.items()},
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "theory_slope": self.theory_slope,
            "median_strictly_decreasing": self.strictly_decreasing,
            "decreasing_replicate_sets": self.decreasing_replicate_sets,
            "mass_N_exceed_at_largest_n": self.overfit_at_largest_n[0],
            "mass_s_exceed_at_largest_n": self.overfit_at_largest_n[1],
            "alpha_below_p": self.alpha_below_p,
            "failed_cells": sum(1 for r in self.rows if r["status"] != "ok"),
        }


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _aggregate(cfg: RateStudyConfig, rows: list) -> RateStudyResult:
    target = get_target(cfg.target)
    ok = [r for r in rows if r["status"] == "ok"]
    medians = {}
    for n in cfg.n_list:
        vals = [r["d_n"] for r in ok if r["n"] == n]
        medians[n] = float(np.median(vals)) if vals else math.nan
    ns = np.array([n for n in cfg.n_list if math.isfinite(medians[n]) and medians[n] > 0], dtype=float)
    ys = np.array([medians[int(n)] for n in ns])
    if ns.size >= 2:
        fit = stats.linregress(np.log(ns), np.log(ys))
        slope, stderr = float(fit.slope), float(fit.stderr)
    else:
        slope = stderr = math.nan
    med = [medians[n] for n in cfg.n_list]
    decreasing = all(b < a for a, b in zip(med, med[1:]))
    dec_sets = 0
    for r in range(cfg.replicates):
        d = {x["n"]: x["d_n"] for x in ok if x["replicate"] == r}
        seq = [d.get(n, math.nan) for n in cfg.n_list]
        if all(math.isfinite(v) for v in seq) and all(b < a for a, b in zip(seq, seq[1:])):
            dec_sets += 1
    last = [r for r in ok if r["n"] == cfg.n_list[-1]]
    if last:
        Ns = np.concatenate([r["Ns"] for r in last])
        ss = np.concatenate([r["ss"] for r in last])
        overfit = overfit_masses(Ns, ss, last[0]["N_n"], last[0]["s_n"])
    else:
        overfit = (math.nan, math.nan)
    return RateStudyResult(
        cfg,
        rows,
        slope,
        stderr,
        -target.alpha / (2 * target.alpha + target.p),
        medians,
        decreasing,
        dec_sets,
        overfit,
        target.alpha < target.p,
    )


def rate_study(cfg: RateStudyConfig, out_dir=None) -> RateStudyResult:
    """Run every ``(n, replicate)`` cell (in parallel when ``workers > 1``) and fit the rate.

    With ``out_dir`` each finished cell is saved as JSON and skipped on a
    rerun, so an interrupted study resumes where it stopped.
    """
    out = Path(out_dir) if out_dir is not None else None
    cells = [(n, r) for n in cfg.n_list for r in range(cfg.replicates)]
    done = {}
    if out is not None:
        for n, r in cells:
            p = _cell_path(out, n, r)
            if p.exists():
                row = json.loads(p.read_text())
                if row.get("status") == "ok":
                    t = p.with_suffix(".runtime")
                    row["runtime"] = float(t.read_text()) if t.exists() else math.nan
                    done[(n, r)] = row
    todo = [c for c in cells if c not in done]

    def _store(row):
        done[(row["n"], row["replicate"])] = row
        if out is not None:
            p = _cell_path(out, row["n"], row["replicate"])
            p.parent.mkdir(parents=True, exist_ok=True)
            # wall-clock time goes to a sidecar so the cell record itself is reproducible
            p.write_text(json.dumps({k: v for k, v in row.items() if k != "runtime"}, sort_keys=True))
            p.with_suffix(".runtime").write_text(f"{row['runtime']!r}\n")

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_cell, cfg, n, r) for n, r in todo]
            for f in futures:
                _store(f.result())
    else:
        for n, r in todo:
            _store(_run_cell(cfg, n, r))

    rows = [done[c] for c in cells]
    result = _aggregate(cfg, rows)
    if out is not None:
        _write_study(result, out)
    return result


def _write_study(result: RateStudyResult, out: Path):
    cfg = result.config
    out.mkdir(parents=True, exist_ok=True)
    (out / "cells.csv").write_text(result.table_csv())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "replicate", "runtime_s"])
    for r in result.rows:
        w.writerow([r["n"], r["replicate"], f"{r['runtime']:.3f}"])
    (out / "timings.csv").write_text(buf.getvalue())
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=1, sort_keys=True) + "\n")
    ok = [r for r in result.rows if r["status"] == "ok"]
    ns = list(cfg.n_list)
    loglog_plot(
        out / "rate_loglog.svg",
        ns,
        [result.medians[n] for n in ns],
        scatter=([r["n"] for r in ok], [r["d_n"] for r in ok]),
        ref_slope=result.theory_slope,
        xlabel="n",
        ylabel="empirical L2 error of the posterior mean",
        title=f"{cfg.target}: fitted slope {result.slope:.3f}",
    )
    last = [r for r in ok if r["n"] == ns[-1]]
    if last:
        histogram_plot(
            out / "posterior_N_s.svg",
            {"N": np.concatenate([r["Ns"] for r in last]), "s": np.concatenate([r["ss"] for r in last])},
            title=f"pooled posterior draws, n = {ns[-1]}",
        )


# ------------------------------------------------------------ deep vs shallow

REFERENCE_MSE = {
    "deep": {"train": 0.0229, "validation": 0.0112},
    "shallow": {"train": 0.0441, "validation": 0.09},
}


@dataclass(frozen=True)
class DeepShallowConfig:
    grid: int = 201
    holdout_every: int = 5
    noise: bool = False
    penalty_weight: float = 1e-4
    deep_epochs: int = 200
    shallow_epochs: int = 200
    deep_lr: float = 3e-3
    shallow_lr: float = 3e-3
    lr_decay: float = 0.99  # per-epoch multiplicative decay
    batch_size: int = 64
    momentum: float = 0.9
    shift_init: float = -0.1
    restarts: int = 8  # random inits, each warmed up before the best one continues
    warmup_epochs: int = 5
    seed: int = 0


def _split(n: int, every: int):
    idx = np.arange(n)
    hold = idx % every == every - 1
    return idx[~hold], idx[hold]


def _multistart_train(arch, train, cfg: DeepShallowConfig, epochs: int, lr: float, name: str):
    """Warm up ``cfg.restarts`` random inits, then keep training the one with the lowest objective.

    Narrow deep ReLU stacks often start with a dead path; a few cheap starts
    avoid reporting a constant fit that only reflects an unlucky draw.
    """
    warm = min(cfg.warmup_epochs, epochs)
    best = None
    for k in range(max(1, cfg.restarts)):
        try:
            fit = map_sgd_train(
                arch,
                train,
                penalty_weight=cfg.penalty_weight,
                epochs=warm,
                lr_schedule=lambda e: lr * cfg.lr_decay**e,
                seed=child_seed(cfg.seed, "sgd", name, k),
                batch_size=cfg.batch_size,
                momentum=cfg.momentum,
                shift_init=cfg.shift_init,
            )
        except DivergenceError:
            continue
        if best is None or fit.loss_trace[-1] < best.loss_trace[-1]:
            best = fit
    if best is None:
        raise DivergenceError(f"all {cfg.restarts} starts diverged during warm-up")
    rest = map_sgd_train(
        arch,
        train,
        penalty_weight=cfg.penalty_weight,
        epochs=epochs - warm,
        lr_schedule=lambda e: lr * cfg.lr_decay ** (e + warm),
        seed=child_seed(cfg.seed, "sgd", name, "continue"),
        batch_size=cfg.batch_size,
        momentum=cfg.momentum,
        init=best.params,
    )
    rest.loss_trace = best.loss_trace + rest.loss_trace[1:]
    return rest


def deep_vs_shallow(cfg: DeepShallowConfig = DeepShallowConfig(), out_dir=None) -> dict:
    """Train the deep and the shallow comparator on the grid of ``f1`` and report MSEs."""
    target = get_target("f1")
    data = make_dataset(target, cfg.grid**2, "grid", cfg.seed, cfg.noise)
    tr, va = _split(data.n, cfg.holdout_every)
    train = RegressionDataset(data.xs[tr], data.ys[tr])
    valid = RegressionDataset(data.xs[va], data.ys[va])
    deep, shallow = deep_poly_net_template()
    report = {
        "n_train": train.n,
        "n_validation": valid.n,
        "variance_y_validation": float(np.var(valid.ys)),
        "reference": REFERENCE_MSE,
    }
    for name, arch, epochs, lr in (
        ("deep", deep, cfg.deep_epochs, cfg.deep_lr),
        ("shallow", shallow, cfg.shallow_epochs, cfg.shallow_lr),
    ):
        entry = {"widths": list(arch.widths), "n_params": arch.n_params}
        try:
            fit = _multistart_train(arch, train, cfg, epochs, lr, name)
            entry.update(
                status="ok",
                train_mse=fit.mse(train),
                validation_mse=fit.mse(valid),
                final_objective=fit.loss_trace[-1],
            )
        except DivergenceError as exc:
            entry.update(status=f"diverged: {exc}", train_mse=math.nan, validation_mse=math.nan)
        report[name] = entry
    d, s = report["deep"]["validation_mse"], report["shallow"]["validation_mse"]
    report["deep_beats_shallow"] = bool(d < s)
    report["deep_validation_ok"] = bool(d <= 0.05)
    report["shallow_beats_constant"] = bool(s < report["variance_y_validation"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "deep_vs_shallow.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return report
