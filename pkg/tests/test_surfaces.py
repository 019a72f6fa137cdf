import numpy as np
import pytest

from volsurfgen import BsQuote, bs_call
from volsurfgen.exceptions import DataError
from volsurfgen.surfaces import (
    SurfaceGrid,
    dupire_fdm,
    read_surface_csv,
    to_total_variance,
    write_surface_csv,
)


def _bs_price_grid(sigma, strikes, maturities, rate=0.0, s0=1.0):
    values = np.empty((strikes.size, maturities.size))
    for i, k in enumerate(strikes):
        for j, t in enumerate(maturities):
            values[i, j] = bs_call(BsQuote(s0, k, t, rate, sigma))
    return SurfaceGrid(maturities, strikes, values, "price")


class TestSurfaceGrid:
    def test_axes_must_ascend(self):
        with pytest.raises(ValueError):
            SurfaceGrid(np.array([1.0, 0.5]), np.array([1.0, 2.0]), np.zeros((2, 2)), "price")

    def test_vol_kind_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            SurfaceGrid(
                np.array([1.0]), np.array([1.0, 2.0]), np.array([[0.2], [-0.1]]), "implied_vol"
            )

    def test_invalid_cells_may_hold_nan(self):
        grid = SurfaceGrid(
            np.array([1.0]),
            np.array([1.0, 2.0]),
            np.array([[0.2], [np.nan]]),
            "implied_vol",
            valid=np.array([[True], [False]]),
        )
        assert grid.valid.sum() == 1

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            SurfaceGrid(np.array([1.0]), np.array([1.0]), np.zeros((1, 1)), "vols")


class TestTotalVariance:
    def test_direct_substitution(self):
        grid = SurfaceGrid(
            np.array([1.0]), np.array([0.5, 1.0, 2.0]), np.full((3, 1), 0.2), "implied_vol"
        )
        w = to_total_variance(grid)
        assert w.kind == "total_variance"
        assert np.allclose(w.values, 0.04)

    def test_zero_vol(self):
        grid = SurfaceGrid(
            np.array([0.5, 2.0]), np.array([1.0, 1.5]), np.zeros((2, 2)), "implied_vol"
        )
        assert np.all(to_total_variance(grid).values == 0.0)

    def test_roundtrip_identity(self):
        rng = np.random.default_rng(3)
        maturities = np.sort(rng.uniform(0.5, 2.0, 6))
        strikes = np.sort(rng.uniform(0.5, 2.5, 9))
        vols = rng.uniform(0.1, 0.8, (9, 6))
        grid = SurfaceGrid(maturities, strikes, vols, "implied_vol")
        w = to_total_variance(grid)
        back = np.sqrt(w.values / maturities[None, :])
        assert np.max(np.abs(back - vols)) < 1e-14

    def test_kind_check(self):
        grid = SurfaceGrid(np.array([1.0]), np.array([1.0]), np.zeros((1, 1)), "price")
        with pytest.raises(ValueError):
            to_total_variance(grid)


class TestDupireFdm:
    def test_constant_vol_black_scholes(self):
        # backward differences are first order: ~1e-2 accuracy holds where
        # the price surface is well scaled; the far wings see the relative
        # T-derivative blow up (prices decay exponentially in d^2), which
        # is the scheme's known weakness, so bound them separately
        strikes = np.linspace(0.5, 2.5, 50)
        maturities = np.linspace(0.5, 2.0, 20)
        prices = _bs_price_grid(0.3, strikes, maturities)
        local = dupire_fdm(prices, rate=0.0)
        err = np.where(local.valid, np.abs(local.values - 0.3), 0.0)
        central = (strikes >= 0.8) & (strikes <= 1.6)
        assert np.max(err[central, 4:]) < 0.01
        assert np.max(err) < 0.07

    def test_constant_vol_with_rate(self):
        strikes = np.linspace(0.5, 2.5, 60)
        maturities = np.linspace(0.5, 2.0, 24)
        prices = _bs_price_grid(0.25, strikes, maturities, rate=0.03)
        local = dupire_fdm(prices, rate=0.03)
        err = np.where(local.valid, np.abs(local.values - 0.25), 0.0)
        central = (strikes >= 0.8) & (strikes <= 1.6)
        # lower vol pushes the wings further out in d-units, so slightly
        # looser than the sigma = 0.3 case
        assert np.max(err[central, 4:]) < 0.02
        assert np.max(err) < 0.08

    def test_first_order_convergence_in_maturity_step(self):
        strikes = np.linspace(0.5, 2.5, 50)
        central = (strikes >= 0.8) & (strikes <= 1.6)
        errs = []
        for n_t in (10, 19, 37):
            maturities = np.linspace(0.5, 2.0, n_t)
            local = dupire_fdm(_bs_price_grid(0.3, strikes, maturities), rate=0.0)
            err = np.where(local.valid, np.abs(local.values - 0.3), 0.0)
            errs.append(np.max(err[central, -3:]))
        assert errs[0] > errs[1] > errs[2]
        assert errs[0] / errs[2] > 2.5

    def test_edges_marked_absent(self):
        strikes = np.linspace(0.8, 1.2, 5)
        maturities = np.linspace(0.5, 1.5, 4)
        prices = _bs_price_grid(0.3, strikes, maturities)
        local = dupire_fdm(prices, rate=0.0)
        assert not local.valid[0, :].any()
        assert not local.valid[-1, :].any()
        assert not local.valid[:, 0].any()

    def test_forced_nonconvex_cell_flagged(self):
        strikes = np.linspace(0.8, 1.2, 7)
        maturities = np.linspace(0.5, 1.5, 5)
        prices = _bs_price_grid(0.3, strikes, maturities)
        # bump one interior point upward: the column loses convexity there
        prices.values[3, 2] += 0.05
        local = dupire_fdm(prices, rate=0.0)
        assert not local.valid[3, 2]
        # its strike neighbours keep a positive second difference
        assert local.valid[1, 2]
        assert local.valid[5, 2]

    def test_constant_in_maturity_gives_zero_local_vol(self):
        strikes = np.linspace(0.5, 1.5, 11)
        maturities = np.array([0.5, 1.0, 1.5])
        column = np.maximum(1.0 - strikes, 0.0) + 0.1 * (2.0 - strikes) ** 2
        values = np.tile(column[:, None], (1, 3))
        prices = SurfaceGrid(maturities, strikes, values, "price")
        local = dupire_fdm(prices, rate=0.0)
        assert np.allclose(local.values[local.valid], 0.0)

    def test_axes_preserved(self):
        strikes = np.sort(np.random.default_rng(0).uniform(0.5, 2.5, 12))
        maturities = np.sort(np.random.default_rng(1).uniform(0.5, 2.0, 6))
        prices = _bs_price_grid(0.3, strikes, maturities)
        local = dupire_fdm(prices, rate=0.0)
        assert np.array_equal(local.strikes, strikes)
        assert np.array_equal(local.maturities, maturities)

    def test_majority_invalid_grid_rejected(self):
        strikes = np.linspace(0.8, 1.2, 6)
        maturities = np.linspace(0.5, 1.5, 4)
        # concave in strike everywhere: every computable cell is invalid
        values = -np.add.outer((strikes - 1.0) ** 2, 0.0 * maturities) + 1.0
        prices = SurfaceGrid(maturities, strikes, values, "price")
        with pytest.raises(DataError):
            dupire_fdm(prices, rate=0.0)

    def test_too_small_grid_rejected(self):
        prices = _bs_price_grid(0.3, np.array([0.9, 1.1]), np.array([0.5, 1.0]))
        with pytest.raises(ValueError):
            dupire_fdm(prices, rate=0.0)


class TestSurfaceCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        grid = SurfaceGrid(
            np.sort(rng.uniform(0.5, 2.0, 5)),
            np.sort(rng.uniform(0.5, 2.5, 7)),
            rng.uniform(0.05, 0.9, (7, 5)),
            "implied_vol",
            valid=rng.uniform(size=(7, 5)) > 0.2,
        )
        grid.values[~grid.valid] = np.nan
        path = tmp_path / "surface.csv"
        write_surface_csv(grid, path)
        back = read_surface_csv(path)
        assert back.kind == grid.kind
        assert np.array_equal(back.maturities, grid.maturities)
        assert np.array_equal(back.strikes, grid.strikes)
        assert np.array_equal(back.valid, grid.valid)
        assert np.array_equal(back.values[back.valid], grid.values[grid.valid])

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("kind,T,K,value,valid\nimplied_vol,1.0,oops,0.2,1\n")
        with pytest.raises(DataError, match=":2"):
            read_surface_csv(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("T,K,value\n")
        with pytest.raises(DataError):
            read_surface_csv(path)
