"""Closed-form sizing rules, rates and bounds for sparse deep ReLU posteriors.

Unsubscripted logarithms are natural logs; ``log2`` appears only in the depth
rule.  Floors are guarded with ``max(., 1)`` so every quantity stays usable
at small ``n``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .network import Architecture, count_params
from .prior import _log_geometric_norm, sparsity_support

__all__ = [
    "ProblemSpec",
    "TheoryReport",
    "floor_log2",
    "ceil_log2",
    "depth_L_star",
    "sparsity_s_star",
    "width_N_star",
    "rate_eps_n",
    "sieve_sizes",
    "approx_error_bound",
    "log_entropy_bound",
    "entropy_bound",
    "log_chernoff_tail_N",
    "chernoff_tail_N",
    "log_prior_s_tail",
    "check_contraction_conditions",
    "contraction_sequence",
    "theory_report",
]


def floor_log2(n: int) -> int:
    if n < 1:
        raise ValueError("log2 needs a positive integer")
    return int(n).bit_length() - 1


def ceil_log2(p: int) -> int:
    if p < 1:
        raise ValueError("log2 needs a positive integer")
    return (int(p) - 1).bit_length()


def _log_expm1(x: float) -> float:
    """``log(e^x - 1)`` without overflow."""
    if x > 30:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    p: int
    alpha: float
    holder_norm: float = 1.0
    delta: float = 1.5
    C_N: float = 1.0
    C_S: float = 1.0
    C_tilde_N: float = 1.0
    d: float = 3.0
    # prior-mass constants of the contraction argument
    C: float = 1.0
    D: float = 1.0
    lambda_N: float = 1.0
    lambda_s: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.p < 1:
            raise ValueError("p must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.alpha < self.p:
            warnings.warn(f"alpha={self.alpha} >= p={self.p}: outside the alpha < p range of the rate results")
        if not self.delta > 1:
            warnings.warn(f"delta={self.delta} <= 1: the entropy argument needs delta > 1")

    @property
    def exponent(self) -> float:
        """``p / (2 alpha + p)``."""
        return self.p / (2 * self.alpha + self.p)


def depth_L_star(n: int, p: int) -> int:
    return 8 + (floor_log2(n) + 5) * (1 + ceil_log2(p))


def sparsity_s_star(N: int, p: int, alpha: float, L_star: int) -> int:
    return math.ceil(94 * p**2 * (alpha + 1) ** (2 * p) * N * (L_star + ceil_log2(p)))


def width_N_star(n: int, alpha: float, p: int, C_N: float = 1.0) -> int:
    inner = math.floor(n ** (p / (2 * alpha + p)) / math.log(n))
    return max(1, math.floor(C_N * inner))


def rate_eps_n(n: int, alpha: float, p: int, delta: float) -> float:
    return n ** (-alpha / (2 * alpha + p)) * math.log(n) ** delta


def sieve_sizes(
    n: int,
    alpha: float,
    p: int,
    delta: float,
    C_tilde_N: float = 1.0,
    L_star: Optional[int] = None,
    arch: Optional[Architecture] = None,
) -> tuple[int, int]:
    """``(N_n, s_n)``; ``s_n`` is capped at ``T`` when an architecture is supplied."""
    L = depth_L_star(n, p) if L_star is None else L_star
    N_n = max(1, math.floor(C_tilde_N * n ** (p / (2 * alpha + p)) * math.log(n) ** (2 * delta - 1)))
    s_n = math.floor(L * N_n)
    if arch is not None:
        s_n = min(s_n, count_params(arch))
    return N_n, s_n


def approx_error_bound(N: float, n: int, p: int, alpha: float, holder_norm: float) -> float:
    if N < max((alpha + 1) ** p, holder_norm + 1):
        warnings.warn("N below the range where the approximation bound applies")
    return (2 * holder_norm + 1) * 3 ** (p + 1) * N / n + holder_norm * 2**alpha * N ** (-alpha / p)


def log_entropy_bound(s: int, L: int, p: int, N: int, eps: float) -> float:
    """Log of the inner argument ``(72/eps)(L+1)(12pN+1)^{2(L+2)}``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return math.log(72.0) - math.log(eps) + math.log(L + 1) + 2 * (L + 2) * math.log(12 * p * N + 1)


def entropy_bound(s: int, L: int, p: int, N: int, eps: float) -> float:
    """``(s+1) log((72/eps)(L+1)(12pN+1)^{2(L+2)})``."""
    return (s + 1) * log_entropy_bound(s, L, p, N, eps)


def log_chernoff_tail_N(N_n: int, t: float, lambda_N: float) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return -t * (N_n + 1) + _log_expm1(math.exp(t) * lambda_N)


def chernoff_tail_N(N_n: int, t: float, lambda_N: float) -> float:
    """``exp(-t(N_n+1)) (exp(e^t lambda) - 1)``, inf when it overflows."""
    lv = log_chernoff_tail_N(N_n, t, lambda_N)
    return math.inf if lv > 709.0 else math.exp(lv)


def log_prior_s_tail(s_n: int, T: int, lambda_s: float, s_max: Optional[int] = None) -> float:
    """``log Pi(s > s_n)`` under the normalised exponential-decay prior."""
    K = sparsity_support(T, s_max)
    if s_n >= K:
        return -math.inf
    # sum_{k=s_n+1}^{K} e^{-lambda k} = e^{-lambda (s_n+1)} sum_{j=0}^{K-s_n-1} e^{-lambda j}
    return -lambda_s * (s_n + 1) + _log_geometric_norm(K - s_n - 1, lambda_s) - _log_geometric_norm(
        K, lambda_s
    )


@dataclass
class Inequality:
    name: str
    lhs: float
    rhs: float
    log_scale: bool = False

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    @property
    def ratio(self) -> float:
        """``lhs / rhs`` (difference of logs when both sides are logs)."""
        if self.log_scale:
            return self.lhs - self.rhs
        return self.lhs / self.rhs


@dataclass
class ContractionReport:
    n: int
    eps_n: float
    n_eps2: float
    N_n: int
    s_n: int
    L_star: int
    entropy: Inequality
    prior_mass: Inequality
    sieve_remainder: Inequality

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("n", "eps_n", "n_eps2", "N_n", "s_n", "L_star")}
        for ineq in (self.entropy, self.prior_mass, self.sieve_remainder):
            out[ineq.name] = {"lhs": ineq.lhs, "rhs": ineq.rhs, "holds": ineq.holds, "log_scale": ineq.log_scale}
        return out


def check_contraction_conditions(problem: ProblemSpec, arch: Optional[Architecture] = None) -> ContractionReport:
    """Evaluate the three sufficient conditions at this finite ``n``.

    (a) entropy bound at ``(s_n, L*, p, N_n, eps_n)`` against ``n eps_n^2``;
    (b) prior-mass exponent ``(C+D) n^{p/(2a+p)} log^2 n`` against ``d n eps_n^2``;
    (c) ``log[chernoff(N_n, log N_n) + Pi(s > s_n)]`` against ``-(d+2) n eps_n^2``.

    Nothing is raised when a condition fails; these are asymptotic statements.
    """
    n, p, a = problem.n, problem.p, problem.alpha
    L = depth_L_star(n, p)
    eps = rate_eps_n(n, a, p, problem.delta)
    n_eps2 = n * eps * eps
    if arch is None:
        # widest member of the sieve
        N_n, _ = sieve_sizes(n, a, p, problem.delta, problem.C_tilde_N, L)
        arch = Architecture.template(p, N_n, L)
    N_n, s_n = sieve_sizes(n, a, p, problem.delta, problem.C_tilde_N, L, arch)
    ent = Inequality("entropy", entropy_bound(s_n, L, p, N_n, eps), n_eps2)
    mass = Inequality(
        "prior_mass", (problem.C + problem.D) * n ** problem.exponent * math.log(n) ** 2, problem.d * n_eps2
    )
    log_ch = log_chernoff_tail_N(N_n, math.log(N_n), problem.lambda_N)
    log_st = log_prior_s_tail(s_n, count_params(arch), problem.lambda_s)
    log_rem = np.logaddexp(log_ch, log_st) if log_st > -math.inf else log_ch
    rem = Inequality("sieve_remainder", float(log_rem), -(problem.d + 2) * n_eps2, log_scale=True)
    return ContractionReport(n, eps, n_eps2, N_n, s_n, L, ent, mass, rem)


def contraction_sequence(problem: ProblemSpec, ks) -> dict:
    """Run the check along ``n = 2^k`` and summarise each condition's trend.

    A condition is flagged ``eventually`` when it holds over the final third of
    the sequence with a non-increasing ``lhs/rhs`` ratio there.
    """
    reports = [check_contraction_conditions(_with_n(problem, 2**k)) for k in ks]
    summary = {"ks": list(ks), "reports": reports}
    tail = max(2, len(reports) // 3)
    for name in ("entropy", "prior_mass", "sieve_remainder"):
        ratios = np.array([getattr(r, name).ratio for r in reports])
        holds = np.array([getattr(r, name).holds for r in reports])
        summary[name] = {
            "ratios": ratios,
            "holds": holds,
            "eventually": bool(holds[-tail:].all() and np.all(np.diff(ratios[-tail:]) <= 0)),
        }
    return summary


def _with_n(problem: ProblemSpec, n: int) -> ProblemSpec:
    d = asdict(problem)
    d["n"] = n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ProblemSpec(**d)


@dataclass
class TheoryReport:
    inputs: dict
    T: int
    L_star: int
    s_star: int
    N_star: int
    eps_n: float
    N_n: int
    s_n: int
    approx_bound: float
    entropy_bound: float
    chernoff_tail: float
    log_chernoff_tail: float  # the tail itself underflows to 0.0 for large N_n
    conditions: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        return d

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if k in ("inputs", "conditions"):
                for kk, vv in v.items():
                    lines.append(f"{k}.{kk} = {_fmt(vv)}")
            else:
                lines.append(f"{k} = {_fmt(v)}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def theory_report(problem: ProblemSpec) -> TheoryReport:
    """Evaluate every sizing rule and bound for one problem."""
    n, p, a = problem.n, problem.p, problem.alpha
    L = depth_L_star(n, p)
    N_star = width_N_star(n, a, p, problem.C_N)
    arch = Architecture.template(p, N_star, L)
    T = count_params(arch)
    eps = rate_eps_n(n, a, p, problem.delta)
    N_n, s_n = sieve_sizes(n, a, p, problem.delta, problem.C_tilde_N, L)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        approx = approx_error_bound(N_star, n, p, a, problem.holder_norm)
    cond = check_contraction_conditions(problem).as_dict()
    flat = {}
    for key in ("entropy", "prior_mass", "sieve_remainder"):
        flat[key + "_lhs"] = cond[key]["lhs"]
        flat[key + "_rhs"] = cond[key]["rhs"]
        flat[key + "_holds"] = cond[key]["holds"]
    return TheoryReport(
        inputs=asdict(problem),
        T=T,
        L_star=L,
        s_star=sparsity_s_star(N_star, p, a, L),
        N_star=N_star,
        eps_n=eps,
        N_n=N_n,
        s_n=s_n,
        approx_bound=approx,
        entropy_bound=entropy_bound(s_n, L, p, N_n, eps),
        chernoff_tail=chernoff_tail_N(N_n, math.log(N_n), problem.lambda_N),
        log_chernoff_tail=log_chernoff_tail_N(N_n, math.log(N_n), problem.lambda_N),
        conditions=flat,
    )
