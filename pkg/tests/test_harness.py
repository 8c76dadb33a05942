import json
import math

import numpy as np
import pytest

from ssdl.harness import (
    RateStudyConfig,
    canonical_tiny_instance,
    get_target,
    make_dataset,
    neighborhood_mass,
    overfit_check,
    overfit_masses,
    rate_study,
    target_library,
    total_variation,
)
from ssdl.theory import ProblemSpec, sieve_sizes


def holder_ratio_max(t, pts=4001):
    """Largest |f(x) - f(y)| / |x - y|^alpha over random pairs plus grid neighbours."""
    rng = np.random.default_rng(0)
    X = rng.random((20000, t.p))
    Y = np.clip(X + rng.normal(0, 0.05, X.shape), 0, 1)
    d = np.linalg.norm(X - Y, axis=1)
    keep = d > 1e-9
    return float(np.max(np.abs(t(X) - t(Y))[keep] / d[keep] ** t.alpha))


class TestTargets:
    def test_library_names(self):
        assert [t.name for t in target_library()] == ["f1", "cusp_1", "cusp_0.5", "bump2d", "zero"]

    def test_unknown(self):
        with pytest.raises(KeyError):
            get_target("nope")

    def test_f1_values(self):
        f1 = get_target("f1")
        # corners of [0, 1]^2 map to u in {-1, 1}^2
        assert f1(np.array([[0.5, 0.5]]))[0] == 1.0
        assert f1(np.array([[1.0, 1.0]]))[0] == 1.0
        assert f1(np.array([[1.0, 0.0]]))[0] == 9.0

    @pytest.mark.parametrize("t", target_library(), ids=lambda t: t.name)
    def test_sup_certificate(self, t):
        k = 201 if t.p == 2 else 40001
        a = np.linspace(0, 1, k)
        X = np.array(np.meshgrid(*([a] * t.p))).reshape(t.p, -1).T
        vals = np.abs(t(X))
        assert vals.max() <= t.sup_bound + 1e-12
        if t.sup_bound > 0:
            assert vals.max() >= 0.99 * t.sup_bound

    @pytest.mark.parametrize("t", target_library(), ids=lambda t: t.name)
    def test_norm_certificate(self, t):
        assert t.sup_bound + holder_ratio_max(t) <= t.holder_norm + 1e-9

    def test_one_dim_input(self):
        assert get_target("cusp_1")(np.array([0.0, 0.5])).tolist() == [0.5, 0.0]


class TestDataset:
    def test_grid(self):
        d = make_dataset(get_target("f1"), 25, "grid", noise=False)
        assert d.n == 25 and d.p == 2
        assert np.array_equal(d.ys, get_target("f1")(d.xs))

    def test_grid_requires_power(self):
        with pytest.raises(ValueError):
            make_dataset(get_target("f1"), 24, "grid")

    def test_uniform_design_in_cube(self):
        d = make_dataset(get_target("bump2d"), 500, "uniform", seed=3)
        assert d.xs.min() >= 0 and d.xs.max() <= 1

    def test_noise_variance(self):
        t = get_target("zero")
        d = make_dataset(t, 10_000, "grid", seed=9)
        assert 0.9 <= d.ys.var() <= 1.1

    def test_seeded(self):
        t = get_target("cusp_1")
        a, b = make_dataset(t, 50, seed=4), make_dataset(t, 50, seed=4)
        assert np.array_equal(a.ys, b.ys)
        assert not np.array_equal(a.ys, make_dataset(t, 50, seed=5).ys)

    def test_bad_design(self):
        with pytest.raises(ValueError):
            make_dataset(get_target("cusp_1"), 50, "sobol")


def test_canonical_instance():
    data, arch, hyper, probes = canonical_tiny_instance()
    assert data.n == 50 and arch.widths == (1, 2, 1) and hyper.s_max == 3
    assert probes.shape == (5, 1)


def test_total_variation():
    assert total_variation({"a": 1.0}, {"b": 1.0}) == 1.0
    assert total_variation({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}) == 0.0


class TestNeighborhoodMass:
    def test_monotone_in_M(self, rng):
        xs = np.linspace(0, 1, 30)
        draws = rng.normal(0, 0.3, (200, 30))
        masses = [neighborhood_mass(draws, np.zeros(30), xs, 0.1, M) for M in (0.5, 1, 2, 4, 8)]
        assert masses == sorted(masses)
        assert masses[-1] == 1.0

    def test_callables(self):
        xs = np.linspace(0, 1, 11)
        draws = [lambda X: np.zeros(X.shape[0]), lambda X: np.ones(X.shape[0])]
        assert neighborhood_mass(draws, lambda X: np.zeros(X.shape[0]), xs, 0.5, 1.0) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            neighborhood_mass(np.zeros((0, 3)), np.zeros(3), np.zeros(3), 1, 1)


class TestOverfit:
    def test_masses(self):
        assert overfit_masses([1, 2, 3, 4], [1, 1, 9, 9], 2, 5) == (0.5, 0.5)

    def test_monotone_in_thresholds(self, rng):
        Ns = rng.integers(1, 20, 500)
        ss = rng.integers(0, 200, 500)
        vals = [overfit_masses(Ns, ss, k, 10 * k)[0] for k in range(1, 21)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    @pytest.mark.filterwarnings("ignore:alpha")
    def test_against_sieve(self):
        problem = ProblemSpec(n=512, p=1, alpha=1.0, holder_norm=1.5)
        N_n, s_n = sieve_sizes(512, 1.0, 1, 1.5, 1.0, 7)
        assert overfit_check(([N_n, N_n + 1], [s_n, s_n]), 512, problem, 7) == (0.5, 0.0)


def small_study(**kw):
    base = dict(
        target="zero", n_list=(16, 64), replicates=3, iterations=1200, burn_in=200, thinning=5,
        depth=1, seed=2,
    )
    base.update(kw)
    return RateStudyConfig(**base)


class TestRateStudy:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            RateStudyConfig(n_list=(512, 128))
        with pytest.raises(ValueError):
            RateStudyConfig(replicates=2)

    def test_zero_target_recovered(self, tmp_path):
        res = rate_study(small_study(noise=False), tmp_path)
        assert all(r["status"] == "ok" for r in res.rows)
        assert all(r["d_n"] <= 0.02 for r in res.rows)
        for name in ("cells.csv", "timings.csv", "summary.json", "rate_loglog.svg", "posterior_N_s.svg"):
            assert (tmp_path / name).exists()
        assert "runtime" not in (tmp_path / "cells.csv").read_text().splitlines()[0]

    def test_resume_skips_finished_cells(self, tmp_path):
        cfg = small_study()
        first = rate_study(cfg, tmp_path)
        cell = tmp_path / "cells" / "n64_r1.json"
        row = json.loads(cell.read_text())
        row["d_n"] = 123.0  # a sentinel only visible if the cell is not recomputed
        cell.write_text(json.dumps(row, sort_keys=True))
        (tmp_path / "cells" / "n16_r0.json").unlink()
        second = rate_study(cfg, tmp_path)
        assert [r["d_n"] for r in second.rows if (r["n"], r["replicate"]) == (64, 1)] == [123.0]
        a = [r for r in first.rows if (r["n"], r["replicate"]) == (16, 0)][0]
        b = [r for r in second.rows if (r["n"], r["replicate"]) == (16, 0)][0]
        assert a["d_n"] == b["d_n"]

    def test_deterministic_tables(self, tmp_path):
        rate_study(small_study(), tmp_path / "a")
        rate_study(small_study(), tmp_path / "b")
        for name in ("cells.csv", "summary.json", "rate_loglog.svg", "posterior_N_s.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_failed_cell_reported(self, tmp_path):
        res = rate_study(small_study(n_list=(15, 17), design="grid", target="f1"), None)
        assert all(r["status"].startswith("failed") for r in res.rows)
        assert math.isnan(res.slope)
