"""Error metrics for volatility fits and repricing-error statistics.

Vol-space accuracy is MAE / MAPE against the ground-truth vols. Surface
quality is measured by repricing: each generated surface is pushed through
the Black-Scholes formula and compared with the market price grid cell by
cell across parameter sets, giving per-cell average (ARPE) and maximum
(MRPE) relative price errors plus their dispersion, exported as heatmaps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .blackscholes import BsQuote, bs_call
from .exceptions import DomainError
from .surfaces import SurfaceGrid
from .validation import check_vector


def mae_mape(predicted, truth):
    """Mean absolute error and mean absolute percentage error."""
    pred = check_vector(predicted, name="predicted")
    true = check_vector(truth, n_rows=pred.size, name="truth")
    if pred.size == 0:
        raise ValueError("need at least one sample")
    if np.any(true == 0.0):
        raise DomainError("MAPE undefined: truth contains zero entries")
    err = np.abs(true - pred)
    return float(np.mean(err)), float(np.mean(err / np.abs(true)))


@dataclass
class RepriceStats:
    """Per-cell repricing errors aggregated across parameter sets."""

    maturities: np.ndarray
    strikes: np.ndarray
    arpe: np.ndarray  # (I, J) mean relative price error
    mrpe: np.ndarray  # (I, J) max relative price error
    std: np.ndarray  # (I, J) std of relative price error
    max_arpe: float
    max_mrpe: float
    cells_excluded: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["T", "K", "arpe", "mrpe", "std"])
            for j, t in enumerate(self.maturities):
                for i, k in enumerate(self.strikes):
                    writer.writerow(
                        [
                            f"{t:.17g}",
                            f"{k:.17g}",
                            f"{self.arpe[i, j]:.17g}",
                            f"{self.mrpe[i, j]:.17g}",
                            f"{self.std[i, j]:.17g}",
                        ]
                    )


def _vol_for_repricing(grid: SurfaceGrid):
    """Black-Scholes vol per cell for whichever quantity the grid holds.

    Implied-vol grids are used directly; local-vol and total-variance
    grids go through sigma_hat = sqrt(value / T), treating the generated
    quantity as a total-variance-like object.
    """
    if grid.kind == "implied_vol":
        return grid.values
    if grid.kind in ("local_vol", "total_variance"):
        with np.errstate(invalid="ignore"):
            return np.sqrt(grid.values / grid.maturities[None, :])
    raise ValueError(f"cannot reprice a {grid.kind!r} grid")


def reprice_stats(vol_surfaces, price_grids, rates, s0: float = 1.0) -> RepriceStats:
    """Repricing errors of generated surfaces against market price grids.

    All grids must share the same (strike, maturity) axes; one rate per
    parameter set. Cells with zero market price or invalid entries are
    excluded (and counted).
    """
    if not vol_surfaces or len(vol_surfaces) != len(price_grids) or len(rates) != len(
        price_grids
    ):
        raise ValueError("need matching non-empty surface/price/rate collections")
    ref = price_grids[0]
    for grid in list(vol_surfaces) + list(price_grids):
        if not np.array_equal(grid.maturities, ref.maturities) or not np.array_equal(
            grid.strikes, ref.strikes
        ):
            raise ValueError("grids are not aligned on a shared harness")

    n_k, n_t = ref.shape
    n_sets = len(vol_surfaces)
    rel = np.full((n_sets, n_k, n_t), np.nan)
    excluded = 0
    for s, (vols, prices, rate) in enumerate(zip(vol_surfaces, price_grids, rates)):
        sigma = _vol_for_repricing(vols)
        usable = vols.valid & prices.valid & np.isfinite(sigma)
        for i in range(n_k):
            for j in range(n_t):
                if not usable[i, j]:
                    excluded += 1
                    continue
                v_mkt = prices.values[i, j]
                if v_mkt == 0.0:
                    excluded += 1
                    continue
                quote = BsQuote(
                    s0, ref.strikes[i], ref.maturities[j], rate, max(sigma[i, j], 0.0)
                )
                rel[s, i, j] = abs(v_mkt - bs_call(quote)) / abs(v_mkt)

    masked = np.ma.masked_invalid(rel)
    arpe = masked.mean(axis=0).filled(np.nan)
    mrpe = masked.max(axis=0).filled(np.nan)
    std = masked.std(axis=0).filled(np.nan)
    return RepriceStats(
        maturities=ref.maturities.copy(),
        strikes=ref.strikes.copy(),
        arpe=arpe,
        mrpe=mrpe,
        std=std,
        max_arpe=float(np.nanmax(arpe)) if np.isfinite(arpe).any() else np.nan,
        max_mrpe=float(np.nanmax(mrpe)) if np.isfinite(mrpe).any() else np.nan,
        cells_excluded=excluded,
    )
