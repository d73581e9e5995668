import math

import numpy as np
import pytest

from mertoncfd import (
    GridSpec,
    MarketParams,
    boundary_values,
    cubic_interpolate,
    inverse_log_transform,
    local_volatility,
    log_transform,
    payoff,
)


class TestLogTransform:
    def test_identity_case(self, merton_params):
        x, tau = log_transform(merton_params.S0, merton_params.T, merton_params)
        assert x == 0.0
        assert tau == 0.0

    def test_at_valuation_date(self, merton_params):
        x, tau = log_transform(100.0, 0.0, merton_params)
        assert x == pytest.approx(0.0, abs=1e-15)
        assert tau == pytest.approx(0.25)

    def test_direct_logarithm(self, merton_params):
        # oracle: math.log(0.9) = -0.105360516...
        x, tau = log_transform(90.0, 0.0, merton_params)
        assert x == pytest.approx(math.log(0.9), rel=1e-14)
        assert x == pytest.approx(-0.105361, abs=1e-6)
        assert tau == pytest.approx(0.25)

    @pytest.mark.parametrize("S", [13.5, 42.0, 100.0, 500.0])
    @pytest.mark.parametrize("t", [0.0, 0.1, 0.25])
    def test_round_trip(self, merton_params, S, t):
        x, tau = log_transform(S, t, merton_params)
        S_back, t_back = inverse_log_transform(x, tau, merton_params)
        assert S_back == pytest.approx(S, rel=1e-15)
        assert t_back == pytest.approx(t, abs=1e-15)

    def test_rejects_non_positive_spot(self, merton_params):
        with pytest.raises(ValueError):
            log_transform(0.0, 0.0, merton_params)
        with pytest.raises(ValueError):
            log_transform(-5.0, 0.0, merton_params)


class TestPayoff:
    def test_at_the_money_kink(self, merton_params):
        assert payoff(0.0, merton_params) == 0.0

    def test_direct_evaluation(self, merton_params):
        assert payoff(math.log(0.5), merton_params) == pytest.approx(50.0, rel=1e-14)

    def test_deep_out_of_the_money(self, merton_params):
        assert payoff(20.0, merton_params) == 0.0

    def test_zero_beyond_kink_and_continuous(self, merton_params):
        x = np.linspace(-2.0, 2.0, 4001)
        v = payoff(x, merton_params)
        assert np.all(v[x >= merton_params.kink] == 0.0)
        assert np.all(v >= 0.0)
        # continuity: small increments move the payoff by O(dx)
        assert np.max(np.abs(np.diff(v))) < 100.0 * (x[1] - x[0]) * 1.01


class TestBoundaryValues:
    def test_styles_coincide_at_expiry(self, merton_params):
        eur = boundary_values(0.0, "european", merton_params, L=2.0)
        amer = boundary_values(0.0, "american", merton_params, L=2.0)
        assert eur == amer
        assert eur[1] == 0.0

    def test_european_direct_evaluation(self, merton_params):
        # oracle: 100*exp(-0.0125) - 100*exp(-2) = 85.2241522...
        left, right = boundary_values(0.25, "european", merton_params, L=2.0)
        expected = 100.0 * math.exp(-0.0125) - 100.0 * math.exp(-2.0)
        assert left == pytest.approx(expected, rel=1e-14)
        assert left == pytest.approx(85.224, abs=1e-3)
        assert right == 0.0

    @pytest.mark.parametrize("tau", [0.0, 0.05, 0.13, 0.25])
    def test_american_left_is_tau_independent(self, merton_params, tau):
        left, _ = boundary_values(tau, "american", merton_params, L=2.0)
        assert left == merton_params.K - merton_params.S0 * math.exp(-2.0)

    def test_unknown_style_rejected(self, merton_params):
        with pytest.raises(ValueError):
            boundary_values(0.1, "bermudan", merton_params, L=2.0)

    def test_compatibility_with_payoff_at_expiry(self, merton_params):
        # initial and boundary data agree at x = +/-L when the kink is interior
        for L in (1.0, 2.0, 3.0):
            left, right = boundary_values(0.0, "european", merton_params, L=L)
            assert abs(left - payoff(-L, merton_params)) < 1e-12
            assert abs(right - payoff(L, merton_params)) < 1e-12


class TestLocalVolatility:
    def test_vanishing_numerator_at_120(self, local_vol_params):
        x = math.log(1.2)  # S0 * e^x = 120
        for tau in (0.0, 0.1, 0.25):
            assert local_volatility(x, tau, local_vol_params) == pytest.approx(0.15, abs=1e-15)

    def test_direct_evaluation(self, local_vol_params):
        # oracle: 0.15 + 0.15*0.5*(0.2^2)/(1+1.44) = 0.1512295...
        got = local_volatility(0.0, local_vol_params.T, local_vol_params)
        assert got == pytest.approx(0.15 + 0.15 * 0.5 * 0.04 / 2.44, rel=1e-14)
        assert got == pytest.approx(0.151230, abs=1e-6)

    def test_lower_and_upper_bounds_on_grid(self, local_vol_params):
        grid = GridSpec.from_mesh_ratio(L=2.0, N=256, T=local_vol_params.T)
        for tau in (0.0, 0.1, 0.25):
            sig = local_volatility(grid.x, tau, local_vol_params)
            assert np.all(sig >= 0.15)
            s = local_vol_params.S0 * np.exp(grid.x) / 100.0
            rational_sup = np.max((s - 1.2) ** 2 / (s * s + 1.44))
            upper = 0.15 + 0.15 * (0.5 + 2.0 * local_vol_params.T) * rational_sup
            assert np.all(sig <= upper + 1e-15)

    def test_constant_mode_returns_sigma(self, merton_params):
        x = np.linspace(-2, 2, 7)
        sig = local_volatility(x, 0.1, merton_params)
        assert np.all(sig == merton_params.sigma)


class TestMarketParamsValidation:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("sigma", 0.0), ("sigma", -0.1), ("sigma_j", 0.0), ("lam", -0.5),
            ("T", 0.0), ("K", -1.0), ("S0", 0.0), ("vol_mode", "stochastic"),
        ],
    )
    def test_invalid_fields_rejected(self, field, value):
        kwargs = dict(
            r=0.05, sigma=0.15, lam=0.10, mu_j=-0.90, sigma_j=0.45,
            K=100.0, S0=100.0, T=0.25,
        )
        kwargs[field] = value
        with pytest.raises(ValueError):
            MarketParams(**kwargs)


class TestGridSpec:
    def test_odd_n_rejected_with_message(self):
        with pytest.raises(ValueError, match="even"):
            GridSpec(L=2.0, N=65, M=10, T=0.25)

    def test_minimum_sizes(self):
        with pytest.raises(ValueError):
            GridSpec(L=2.0, N=4, M=10, T=0.25)
        with pytest.raises(ValueError):
            GridSpec(L=2.0, N=64, M=1, T=0.25)

    def test_node_layout(self):
        grid = GridSpec(L=2.0, N=16, M=10, T=0.25)
        assert grid.dx == pytest.approx(0.25)
        assert grid.dtau == pytest.approx(0.025)
        assert grid.x[0] == -2.0 and grid.x[-1] == 2.0
        assert np.allclose(np.diff(grid.x), grid.dx)
        assert grid.tau(4) == pytest.approx(0.1)

    def test_from_mesh_ratio(self):
        grid = GridSpec.from_mesh_ratio(L=2.0, N=1536, T=0.25, ratio=0.4)
        assert grid.M == 92160
        assert grid.mesh_ratio == pytest.approx(0.4, rel=1e-12)


class TestCubicInterpolation:
    def test_exact_on_cubics(self, rng):
        x0, dx, n = -1.0, 0.125, 17
        nodes = x0 + dx * np.arange(n)
        coeffs = rng.normal(size=4)
        poly = np.polynomial.Polynomial(coeffs)
        values = poly(nodes)
        xq = rng.uniform(-1.0, 1.0, size=40)
        got = cubic_interpolate(xq, x0, dx, values)
        assert np.allclose(got, poly(xq), rtol=1e-12, atol=1e-12)

    def test_reproduces_nodes(self, rng):
        x0, dx, n = 0.0, 0.1, 12
        values = rng.normal(size=n)
        nodes = x0 + dx * np.arange(n)
        got = cubic_interpolate(nodes, x0, dx, values)
        assert np.allclose(got, values, rtol=1e-12, atol=1e-12)

    def test_fourth_order_on_smooth_function(self):
        # refinement oracle: error should shrink ~16x when dx halves
        errs = []
        for n in (32, 64):
            dx = 2.0 / n
            nodes = -1.0 + dx * np.arange(n + 1)
            values = np.exp(nodes)
            xq = np.linspace(-0.9, 0.9, 101)
            errs.append(np.max(np.abs(cubic_interpolate(xq, -1.0, dx, values) - np.exp(xq))))
        ratio = errs[0] / errs[1]
        assert 10.0 < ratio < 24.0
