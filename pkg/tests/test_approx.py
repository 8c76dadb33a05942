import math

import numpy as np
import pytest
from scipy import stats

from ssdl.approx import (
    deep_poly_net_template,
    identity_sides,
    kolmogorov_identity_audit,
    pl_interpolant_net,
    product_net,
    raw_forward,
    rescale_layers,
    sawtooth_net,
    slope_changes,
    square_depth_law,
    square_net,
)
from ssdl.network import SparseNetwork, count_params

GRID = np.linspace(0, 1, 10_001)


def tent_compose(x, m):
    for _ in range(m):
        x = 2 * np.minimum(x, 1 - x)
    return x


def sup_err(net, f, X):
    return float(np.max(np.abs(net(X) - f(X))))


class TestSawtooth:
    def test_apex(self):
        assert sawtooth_net(1)(np.array([0.5]))[0] == pytest.approx(1.0, abs=1e-15)

    def test_quarter(self):
        assert sawtooth_net(2)(np.array([0.25]))[0] == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("m", range(1, 7))
    def test_matches_composition(self, m):
        assert np.max(np.abs(sawtooth_net(m)(GRID) - tent_compose(GRID, m))) <= 1e-12

    @pytest.mark.parametrize("m", range(1, 7))
    def test_tooth_count(self, m):
        xs = np.linspace(0, 1, 100_001)
        assert slope_changes(sawtooth_net(m)(xs)) == 2**m - 1

    def test_bounded_weights(self):
        net = sawtooth_net(5).net
        SparseNetwork(net.arch, net.gamma, net.beta)  # constructor enforces the invariants
        assert np.max(np.abs(net.beta)) <= 1.0


class TestSquare:
    def test_endpoints_exact(self):
        for m in (1, 4, 8):
            out = square_net(m)(np.array([0.0, 1.0]))
            assert out[0] == 0.0 and out[1] == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("m", range(1, 9))
    def test_bound(self, m):
        g = square_net(m)
        assert sup_err(g, lambda x: x**2, GRID) <= 2.0 ** (-2 * m - 2)
        assert g.bound == 2.0 ** (-2 * m - 2)

    def test_m3_value(self):
        assert sup_err(square_net(3), lambda x: x**2, GRID) <= 0.00390625

    def test_ratio_per_level(self):
        errs = [sup_err(square_net(m), lambda x: x**2, np.linspace(0, 1, 2**12 + 1)) for m in range(1, 8)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios >= 3.5) & (ratios <= 4.5))

    def test_depth_law(self):
        law = square_depth_law()
        depths = [r["depth"] for r in law["rows"]]
        assert depths == list(range(1, 9))
        assert law["r_squared"] > 0.999
        assert law["relative_deviation"] <= 0.15

    def test_raw_and_bounded_agree(self):
        g = square_net(5)
        assert np.max(np.abs(raw_forward(g.raw_layers, GRID[:, None]) - g(GRID))) <= 1e-15


class TestProduct:
    def corners(self, m):
        return product_net(m)(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))

    def test_exact_corners(self):
        out = self.corners(4)
        assert np.allclose(out[:3], 0.0, atol=1e-15)

    def test_unit_corner(self):
        for m in (2, 5):
            assert abs(self.corners(m)[3] - 1.0) <= product_net(m).bound

    def test_zero_factor(self):
        ys = np.linspace(0, 1, 101)
        g = product_net(4)
        assert np.max(np.abs(g(np.column_stack([np.zeros(101), ys])))) <= g.bound

    @pytest.mark.parametrize("m", range(1, 9))
    def test_bound(self, m):
        a = np.linspace(0, 1, 101)
        X = np.array(np.meshgrid(a, a)).reshape(2, -1).T
        g = product_net(m)
        assert sup_err(g, lambda Z: Z[:, 0] * Z[:, 1], X) <= g.bound

    def test_geometric_decay(self):
        a = np.linspace(0, 1, 65)
        X = np.array(np.meshgrid(a, a)).reshape(2, -1).T
        errs = [sup_err(product_net(m), lambda Z: Z[:, 0] * Z[:, 1], X) for m in range(1, 7)]
        assert all(e2 < e1 / 2 for e1, e2 in zip(errs, errs[1:]))


def cusp(alpha):
    return lambda X: np.abs(np.asarray(X).reshape(-1) - 0.5) ** alpha


class TestInterpolant:
    @pytest.mark.parametrize("K", [2, 5, 64])
    def test_linear_reproduction(self, K):
        f = lambda X: 0.3 * np.asarray(X).reshape(-1) - 0.2
        assert sup_err(pl_interpolant_net(f, K), f, GRID) <= 1e-12

    @pytest.mark.parametrize("K", [4, 17, 100, 1024])
    def test_knots_exact(self, K):
        f = cusp(0.5)
        knots = np.linspace(0, 1, K)
        assert np.max(np.abs(pl_interpolant_net(f, K)(knots) - f(knots))) <= 1e-12

    @pytest.mark.parametrize("K", [4, 16, 64, 256, 1024])
    def test_lipschitz_bound(self, K):
        # lipschitz constant 1; exact equality possible at the kink, hence the tie tolerance
        err = sup_err(pl_interpolant_net(cusp(1), K), cusp(1), np.linspace(0, 1, 100_001))
        assert err <= 1 / (2 * (K - 1)) + 1e-12

    def slope(self, alpha):
        Ks = np.array([8, 16, 32, 64, 128, 256, 512, 1024])
        xs = np.linspace(0, 1, 200_001)
        errs = [sup_err(pl_interpolant_net(cusp(alpha), int(K)), cusp(alpha), xs) for K in Ks]
        return stats.linregress(np.log(Ks), np.log(errs)).slope

    def test_slope_alpha_one(self):
        assert -1.2 <= self.slope(1.0) <= -0.8

    def test_slope_alpha_half(self):
        assert -0.65 <= self.slope(0.5) <= -0.35

    def test_two_dim_budget(self):
        f = lambda X: np.exp(-4 * np.sum((np.asarray(X) - 0.5) ** 2, axis=1))
        g = pl_interpolant_net(f, 6, p=2, m=8)
        a = np.linspace(0, 1, 51)
        X = np.array(np.meshgrid(a, a)).reshape(2, -1).T
        assert sup_err(g, f, X) <= g.info["interpolation_error"] + g.info["product_budget"] + 1e-3
        assert g.info["product_budget"] < g.info["interpolation_error"]

    def test_rejections(self):
        with pytest.raises(ValueError):
            pl_interpolant_net(cusp(1), 1)
        with pytest.raises(ValueError):
            pl_interpolant_net(cusp(1), 4, p=3)


class TestRescale:
    def test_exact_equivalence(self, rng):
        layers = [(rng.uniform(-7, 7, (4, 1)), rng.uniform(-3, 3, 4)), (rng.uniform(-9, 9, (3, 4)), rng.uniform(-5, 5, 3))]
        layers.append((rng.uniform(-20, 20, (1, 3)), None))
        bounded = rescale_layers(layers)
        assert all(np.max(np.abs(W)) <= 1 and (b is None or np.max(np.abs(b)) <= 1) for W, b in bounded)
        X = rng.random((200, 1))
        assert np.allclose(raw_forward(bounded, X), raw_forward(layers, X), rtol=1e-14, atol=1e-13)


class TestIdentityAudit:
    def test_point_values(self):
        lhs, rhs = identity_sides("cube_printed", 0.5, 0.3)
        assert lhs == pytest.approx(0.075, abs=1e-15)
        assert rhs == pytest.approx(0.15, abs=1e-15)
        assert identity_sides("cube_printed", 0.0, 0.0) == (0.0, 0.0)

    def test_report(self):
        rep = kolmogorov_identity_audit(201)
        assert rep["cube_printed"]["residual"].shape == (201, 201)
        assert rep["cube_corrected"]["max_abs_residual"] <= 1e-14
        assert rep["quartic_corrected"]["max_abs_residual"] <= 1e-14
        # printed cube doubles the product
        assert rep["cube_printed"]["structure"] == pytest.approx({"x1^2 x2^1": 1.0}, abs=1e-9)
        assert rep["quartic_printed"]["max_abs_residual"] > 1.0

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            kolmogorov_identity_audit(1)


class TestTemplates:
    def test_shapes(self):
        deep, shallow = deep_poly_net_template()
        assert deep.depth == 11
        assert shallow.widths == (2, 2048, 1)

    def test_counts(self):
        deep, shallow = deep_poly_net_template()
        assert count_params(deep) == 168
        assert count_params(shallow) == 8192
