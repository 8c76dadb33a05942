import math
import warnings

import mpmath
import numpy as np
import pytest

from ssdl.network import Architecture, count_params
from ssdl.prior import log_prior_N
from ssdl.theory import (
    ProblemSpec,
    approx_error_bound,
    ceil_log2,
    chernoff_tail_N,
    check_contraction_conditions,
    depth_L_star,
    entropy_bound,
    floor_log2,
    contraction_sequence,
    log_prior_s_tail,
    rate_eps_n,
    sieve_sizes,
    sparsity_s_star,
    theory_report,
    width_N_star,
)

warnings.filterwarnings("ignore", message="alpha=")


class TestLogs:
    @pytest.mark.parametrize("n", [1, 2, 3, 4, 1023, 1024, 1025, 2**40 + 1])
    def test_floor(self, n):
        assert floor_log2(n) == math.floor(mpmath.log(n, 2))

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 8, 9])
    def test_ceil(self, p):
        assert ceil_log2(p) == math.ceil(mpmath.log(p, 2))


class TestDepth:
    def test_examples(self):
        assert depth_L_star(1024, 2) == 38
        assert depth_L_star(2, 1) == 14

    def test_monotone(self):
        for p in (1, 2, 3):
            for n in range(2, 3000, 7):
                assert depth_L_star(2 * n, p) >= depth_L_star(n, p)


class TestSparsityStar:
    def test_examples(self):
        assert sparsity_s_star(1, 1, 1.0, 14) == 5264
        assert sparsity_s_star(1, 2, 1.0, 38) == 234624

    def test_linear_in_N(self):
        assert sparsity_s_star(6, 2, 1.0, 38) == 2 * sparsity_s_star(3, 2, 1.0, 38)


class TestRatesAndSieve:
    def test_eps_example(self):
        expected = mpmath.mpf(1000) ** -0.25 * mpmath.log(1000) ** 1.01
        assert rate_eps_n(1000, 1.0, 2, 1.01) == pytest.approx(float(expected), rel=1e-13)

    def test_floor_guard(self):
        assert width_N_star(1000, 1.0, 2, C_N=0.0) == 1
        assert sieve_sizes(2, 1.0, 1, 1.5, C_tilde_N=0.0)[0] == 1

    def test_width_star_formula(self):
        for n in (100, 1000, 10**5):
            inner = math.floor(n ** (1 / 2) / math.log(n))
            assert width_N_star(n, 1.0, 2) == max(1, inner)

    def test_sequence_limits(self):
        eps = [rate_eps_n(2**k, 1.0, 2, 1.5) for k in range(7, 21)]
        ne2 = [2**k * e * e for k, e in zip(range(7, 21), eps)]
        assert all(b > a for a, b in zip(ne2, ne2[1:]))
        # eps_n -> 0 eventually: decreasing over the upper half and far below its peak
        assert all(b < a for a, b in zip(eps[6:], eps[7:]))
        assert rate_eps_n(2**200, 1.0, 2, 1.5) < 1e-10

    def test_sieve_formula(self):
        n, a, p, d = 2048, 1.0, 1, 1.5
        N_n, s_n = sieve_sizes(n, a, p, d)
        assert N_n == math.floor(n ** (1 / 3) * math.log(n) ** 2)
        assert s_n == depth_L_star(n, p) * N_n

    def test_cap_applied(self):
        arch = Architecture.template(1, 1, 2)
        _, s_n = sieve_sizes(4096, 1.0, 1, 1.5, arch=arch)
        assert s_n == count_params(arch)


class TestApproxBound:
    def test_example(self):
        assert approx_error_bound(4, 100, 1, 1.0, 1.0) == pytest.approx(1.58, abs=1e-12)

    def test_large_n_limit(self):
        assert approx_error_bound(9, 10**15, 2, 1.0, 1.0) == pytest.approx(2 * 9**-0.5, rel=1e-12)

    def test_decreasing_along_N_star(self):
        vals = [approx_error_bound(width_N_star(2**k, 1.0, 2), 2**k, 2, 1.0, 1.0) for k in range(10, 21)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_small_N_warns(self):
        with pytest.warns(UserWarning):
            approx_error_bound(1, 100, 2, 1.0, 5.0)


class TestEntropy:
    def test_example(self):
        expected = 4 * mpmath.log(mpmath.mpf(720) * 3 * mpmath.mpf(13) ** 8)
        assert entropy_bound(3, 2, 1, 1, 0.1) == pytest.approx(float(expected), rel=1e-13)
        assert entropy_bound(3, 2, 1, 1, 0.1) == pytest.approx(112.79, abs=0.01)

    def test_s_zero(self):
        expected = mpmath.log(mpmath.mpf(720) * 3 * mpmath.mpf(13) ** 8)
        assert entropy_bound(0, 2, 1, 1, 0.1) == pytest.approx(float(expected), rel=1e-13)

    def test_monotone_lattice(self):
        base = [(s, L, N, e) for s in range(0, 4) for L in range(1, 4) for N in range(1, 4) for e in (0.5, 0.1)]
        for s, L, N, e in base:
            v = entropy_bound(s, L, 1, N, e)
            assert entropy_bound(s + 1, L, 1, N, e) > v
            assert entropy_bound(s, L + 1, 1, N, e) > v
            assert entropy_bound(s, L, 1, N + 1, e) > v
            assert entropy_bound(s, L, 1, N, e / 2) > v

    def test_no_overflow(self):
        assert math.isfinite(entropy_bound(10**6, 400, 2, 100, 1e-6))

    def test_eps_positive(self):
        with pytest.raises(ValueError):
            entropy_bound(1, 1, 1, 1, 0.0)


def exact_N_tail(N_n, lam):
    return math.fsum(math.exp(log_prior_N(N, lam)) for N in range(N_n + 1, N_n + 400))


class TestChernoff:
    def test_example(self):
        assert chernoff_tail_N(5, math.log(5), 1.0) == pytest.approx(float(mpmath.mpf(5) ** -6 * (mpmath.e**5 - 1)), rel=1e-13)
        assert chernoff_tail_N(5, math.log(5), 1.0) == pytest.approx(0.009434, abs=5e-7)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_dominates_exact_tail(self, lam):
        for N_n in range(1, 51):
            assert chernoff_tail_N(N_n, math.log(N_n), lam) >= exact_N_tail(N_n, lam)

    def test_t_to_zero(self):
        assert chernoff_tail_N(3, 1e-12, 1.0) == pytest.approx(math.e - 1, rel=1e-9)

    def test_overflow_is_inf(self):
        assert chernoff_tail_N(1, 10.0, 2.0) == math.inf

    def test_negative_t(self):
        with pytest.raises(ValueError):
            chernoff_tail_N(3, -1.0, 1.0)


class TestPriorTail:
    def test_matches_sum(self):
        T, lam, s_n = 12, 0.8, 4
        w = np.exp(-lam * np.arange(T + 1))
        assert math.exp(log_prior_s_tail(s_n, T, lam)) == pytest.approx(w[s_n + 1 :].sum() / w.sum(), rel=1e-13)

    def test_beyond_support(self):
        assert log_prior_s_tail(12, 12, 1.0) == -math.inf


class TestContractionConditions:
    # Frozen outcomes of the literal formulas along n = 2^k, k = 10..24 (alpha=1, p=2).
    def test_delta_15_entropy_never_satisfied(self):
        seq = contraction_sequence(ProblemSpec(n=1024, p=2, alpha=1.0, delta=1.5), range(10, 25))
        ent = seq["entropy"]
        assert not ent["eventually"]
        assert not ent["holds"].any()
        assert np.all(np.diff(ent["ratios"]) > 0)
        assert ent["ratios"][0] == pytest.approx(4647.78, rel=1e-4)
        assert seq["prior_mass"]["eventually"]
        assert not seq["sieve_remainder"]["holds"].any()

    def test_delta_half_flags_entropy(self):
        seq = contraction_sequence(ProblemSpec(n=1024, p=2, alpha=1.0, delta=0.5), range(10, 25))
        assert not seq["entropy"]["eventually"]
        assert not seq["prior_mass"]["eventually"]

    def test_n2_smoke(self):
        rep = check_contraction_conditions(ProblemSpec(n=2, p=1, alpha=0.5))
        d = rep.as_dict()
        assert d["L_star"] == 14 and d["N_n"] == 1
        assert set(d) >= {"entropy", "prior_mass", "sieve_remainder"}


class TestSpec:
    def test_alpha_p_warning(self):
        with pytest.warns(UserWarning):
            ProblemSpec(n=10, p=1, alpha=1.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ProblemSpec(n=1, p=1, alpha=0.5)
        with pytest.raises(ValueError):
            ProblemSpec(n=10, p=1, alpha=0.0)


class TestReport:
    def test_values(self):
        rep = theory_report(ProblemSpec(n=1024, p=2, alpha=1.0))
        assert rep.L_star == 38
        d = rep.as_dict()
        for key in ("T", "L_star", "s_star", "N_star", "eps_n", "N_n", "s_n", "approx_bound", "entropy_bound"):
            assert math.isfinite(d[key]) and d[key] > 0
        # the tail underflows; the log carries the value
        N_n = d["N_n"]
        expected = -mpmath.log(N_n) * (N_n + 1) + mpmath.log(mpmath.expm1(N_n))
        assert d["chernoff_tail"] == 0.0
        assert d["log_chernoff_tail"] == pytest.approx(float(expected), rel=1e-12)

    def test_small_problem_all_positive(self):
        d = theory_report(ProblemSpec(n=64, p=1, alpha=0.5)).as_dict()
        assert d["chernoff_tail"] > 0 and math.isfinite(d["chernoff_tail"])

    def test_pure(self):
        problem = ProblemSpec(n=500, p=2, alpha=1.0)
        assert theory_report(problem).to_text() == theory_report(problem).to_text()
