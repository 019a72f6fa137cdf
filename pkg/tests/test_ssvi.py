import numpy as np
import pytest

from volsurfgen.exceptions import DataError
from volsurfgen.ssvi import (
    SsviParams,
    heston_like_phi,
    load_params,
    save_params,
    ssvi_fit,
    ssvi_total_variance,
)
from volsurfgen.surfaces import SurfaceGrid

# mpmath at 50 digits: phi(theta=0.4, lam=1)
PHI_VALUE = 0.43950028772274562965
# sympy exact evaluation: w(k=0.5; rho=-0.4, lam=1, theta=0.4)
W_VALUE = 0.36923433597414574715


def _params(rho=-0.4, lam=1.0, theta=0.4):
    return SsviParams(rho, lam, np.array([1.0]), np.array([theta]))


def _grid_from_ssvi(p, strikes, maturities, s0=1.0):
    k_log = np.log(strikes / s0)
    vols = np.empty((strikes.size, maturities.size))
    for j, t in enumerate(maturities):
        w = ssvi_total_variance(p, k_log, t)
        vols[:, j] = np.sqrt(w / t)
    return SurfaceGrid(maturities, strikes, vols, "implied_vol")


class TestPhi:
    def test_small_argument_limit(self):
        assert heston_like_phi(1e-12, 1.0) == pytest.approx(0.5, abs=1e-9)

    def test_large_argument_vanishes(self):
        assert heston_like_phi(1e4, 1.0) < 1e-3
        assert heston_like_phi(1e8, 1.0) < 1e-7

    def test_high_precision_oracle(self):
        assert heston_like_phi(0.4, 1.0) == pytest.approx(PHI_VALUE, abs=1e-14)

    def test_range_property(self):
        rng = np.random.default_rng(5)
        thetas = 10.0 ** rng.uniform(-8, 3, 300)
        lams = 10.0 ** rng.uniform(-3, 2, 300)
        vals = np.array([heston_like_phi(t, l) for t, l in zip(thetas, lams)])
        assert np.all(vals > 0.0)
        assert np.all(vals <= 0.5)

    def test_series_matches_direct_at_switch(self):
        # the two-term series drops x^2/24 ~ 4e-10 at the switch point
        import mpmath as mp

        mp.mp.dps = 40
        for x in (0.5e-4, 0.99e-4):
            exact = float(
                (1 / mp.mpf(x)) * (1 - (1 - mp.e ** (-mp.mpf(x))) / mp.mpf(x))
            )
            assert abs(heston_like_phi(x, 1.0) - exact) < 1e-9

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            heston_like_phi(0.0, 1.0)
        with pytest.raises(ValueError):
            heston_like_phi(0.4, 0.0)


class TestTotalVariance:
    def test_atm_equals_theta_exactly(self):
        for rho in (-0.7, -0.2, 0.4):
            for lam in (0.3, 1.0, 7.0):
                p = SsviParams(rho, lam, np.array([1.0]), np.array([0.37]))
                assert ssvi_total_variance(p, 0.0, 1.0) == 0.37

    def test_symmetric_when_rho_zero(self):
        p = _params(rho=0.0, lam=2.0)
        for x in (0.1, 0.5, 1.3):
            assert ssvi_total_variance(p, x, 1.0) == pytest.approx(
                ssvi_total_variance(p, -x, 1.0), rel=1e-15
            )

    def test_symbolic_oracle_value(self):
        p = _params(rho=-0.4, lam=1.0, theta=0.4)
        assert ssvi_total_variance(p, 0.5, 1.0) == pytest.approx(W_VALUE, abs=1e-14)

    def test_theta_interpolation_is_linear(self):
        p = SsviParams(-0.4, 1.0, np.array([0.5, 1.5]), np.array([0.2, 0.6]))
        assert p.theta(1.0) == pytest.approx(0.4, abs=1e-15)
        assert p.theta(0.25) == 0.2  # clamped below
        assert p.theta(2.0) == 0.6  # clamped above

    def test_calendar_property_when_theta_nondecreasing(self):
        p = SsviParams(
            -0.6, 2.0, np.array([0.5, 1.0, 1.5, 2.0]), np.array([0.1, 0.22, 0.3, 0.41])
        )
        ks = np.linspace(-1.0, 1.0, 21)
        ts = np.linspace(0.5, 2.0, 31)
        prev = ssvi_total_variance(p, ks, ts[0])
        for t in ts[1:]:
            cur = ssvi_total_variance(p, ks, t)
            assert np.all(cur >= prev - 1e-12)
            prev = cur

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SsviParams(-1.0, 1.0, np.array([1.0]), np.array([0.4]))
        with pytest.raises(ValueError):
            SsviParams(-0.4, 0.0, np.array([1.0]), np.array([0.4]))
        with pytest.raises(ValueError):
            SsviParams(-0.4, 1.0, np.array([1.0, 2.0]), np.array([0.4, 0.3]))
        with pytest.raises(ValueError):
            SsviParams(-0.4, 1.0, np.array([1.0]), np.array([0.0]))


class TestFit:
    def test_self_fit_roundtrip(self):
        truth = SsviParams(
            -0.4, 2.0, np.array([0.5, 1.0, 1.5, 2.0]), np.array([0.08, 0.17, 0.27, 0.38])
        )
        strikes = np.unique(np.concatenate([np.linspace(0.5, 2.5, 25), [1.0]]))
        grid = _grid_from_ssvi(truth, strikes, truth.theta_maturities)
        fit = ssvi_fit(grid, s0=1.0)
        assert fit.rho == pytest.approx(-0.4, abs=1e-3)
        assert fit.lam == pytest.approx(2.0, abs=1e-3)
        assert np.allclose(fit.theta_values, truth.theta_values, atol=1e-12)

    def test_flat_grid_gives_zero_rho(self):
        # strikes symmetric in log-moneyness, as a skewless design implies
        strikes = np.unique(np.concatenate([np.exp(np.linspace(-0.9, 0.9, 21)), [1.0]]))
        maturities = np.linspace(0.5, 2.0, 6)
        vols = np.full((strikes.size, maturities.size), 0.3)
        grid = SurfaceGrid(maturities, strikes, vols, "implied_vol")
        fit = ssvi_fit(grid, s0=1.0)
        assert abs(fit.rho) < 1e-2

    def test_missing_atm_column_rejected(self):
        strikes = np.array([0.5, 0.7, 1.5, 2.0])
        maturities = np.array([1.0, 2.0])
        vols = np.full((4, 2), 0.3)
        with pytest.raises(DataError):
            ssvi_fit(SurfaceGrid(maturities, strikes, vols, "implied_vol"), s0=1.0)

    def test_fit_is_deterministic(self):
        truth = SsviParams(-0.55, 0.7, np.array([0.5, 2.0]), np.array([0.1, 0.44]))
        strikes = np.unique(np.concatenate([np.linspace(0.6, 2.2, 15), [1.0]]))
        grid = _grid_from_ssvi(truth, strikes, truth.theta_maturities)
        a = ssvi_fit(grid)
        b = ssvi_fit(grid)
        assert a.rho == b.rho and a.lam == b.lam

    def test_params_file_roundtrip(self, tmp_path):
        p = SsviParams(-0.31, 2.25, np.array([0.5, 1.0]), np.array([0.1, 0.2]))
        path = tmp_path / "ssvi.json"
        save_params(p, path)
        q = load_params(path)
        assert q.rho == p.rho and q.lam == p.lam
        assert np.array_equal(q.theta_values, p.theta_values)
