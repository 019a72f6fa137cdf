"""Rectangular surface container and Dupire finite-difference local volatility.

A SurfaceGrid is an (strikes x maturities) matrix of one quantity, tagged by
``kind``. Cells can be marked invalid through the boolean ``valid`` mask;
masked cells are reported, never silently filled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .validation import check_ascending

KINDS = ("price", "implied_vol", "local_vol", "total_variance")
_NONNEGATIVE_KINDS = ("implied_vol", "local_vol", "total_variance")

_CSV_HEADER = ["kind", "T", "K", "value", "valid"]


@dataclass
class SurfaceGrid:
    """Values on a rectangular (strike x maturity) grid.

    maturities : ascending year fractions, shape (J,)
    strikes    : ascending strikes, shape (I,)
    values     : shape (I, J)
    kind       : one of KINDS
    valid      : boolean mask, shape (I, J); False cells are absent/invalid
    """

    maturities: np.ndarray
    strikes: np.ndarray
    values: np.ndarray
    kind: str
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.maturities = check_ascending(self.maturities, "maturities")
        self.strikes = check_ascending(self.strikes, "strikes")
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.strikes.size, self.maturities.size)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"(strikes, maturities) = {expected}"
            )
        if self.valid is None:
            self.valid = np.ones(expected, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != expected:
                raise ValueError("valid mask shape does not match values")
        live = self.values[self.valid]
        if not np.all(np.isfinite(live)):
            raise ValueError("values must be finite on valid cells")
        if self.kind in _NONNEGATIVE_KINDS and np.any(live < 0.0):
            raise ValueError(f"{self.kind} values must be non-negative")

    @property
    def shape(self):
        return self.values.shape

    def copy(self) -> "SurfaceGrid":
        return SurfaceGrid(
            self.maturities.copy(),
            self.strikes.copy(),
            self.values.copy(),
            self.kind,
            self.valid.copy(),
        )


def to_total_variance(iv: SurfaceGrid) -> SurfaceGrid:
    """Total variance w = sigma^2 * T from an implied-vol surface."""
    if iv.kind != "implied_vol":
        raise ValueError(f"expected an implied_vol grid, got {iv.kind!r}")
    w = iv.values**2 * iv.maturities[None, :]
    return SurfaceGrid(iv.maturities, iv.strikes, w, "total_variance", iv.valid.copy())


def dupire_fdm(prices: SurfaceGrid, rate: float) -> SurfaceGrid:
    """Local volatility from a call-price grid by finite differences.

    Backward first differences in maturity and strike, central second
    difference in strike (adjacent-spacing formulas, so non-uniform grids
    are fine):

        sigma^2 = (dV/dT + r K dV/dK) / (0.5 K^2 d2V/dK2)

    Cells without a backward neighbour (first maturity column, first
    strike row) and the last strike row (no forward neighbour for the
    second difference) are marked absent. Cells with a non-positive
    denominator or negative radicand are marked invalid; if more than
    half of the computable cells are invalid the grid is rejected.
    """
    if prices.kind != "price":
        raise ValueError(f"expected a price grid, got {prices.kind!r}")
    if not prices.valid.all():
        raise ValueError("dupire_fdm requires a fully valid price grid")
    n_k, n_t = prices.shape
    if n_k < 3 or n_t < 2:
        raise ValueError(f"need at least 3 strikes and 2 maturities, got {prices.shape}")

    v = prices.values
    k = prices.strikes
    t = prices.maturities

    dv_dt = np.full((n_k, n_t), np.nan)
    dv_dt[:, 1:] = (v[:, 1:] - v[:, :-1]) / (t[1:] - t[:-1])[None, :]

    dv_dk = np.full((n_k, n_t), np.nan)
    dv_dk[1:, :] = (v[1:, :] - v[:-1, :]) / (k[1:] - k[:-1])[:, None]

    h_lo = (k[1:-1] - k[:-2])[:, None]
    h_hi = (k[2:] - k[1:-1])[:, None]
    d2v = np.full((n_k, n_t), np.nan)
    d2v[1:-1, :] = 2.0 * (
        v[:-2, :] / (h_lo * (h_lo + h_hi))
        - v[1:-1, :] / (h_lo * h_hi)
        + v[2:, :] / (h_hi * (h_lo + h_hi))
    )

    computable = np.zeros((n_k, n_t), dtype=bool)
    computable[1:-1, 1:] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        numer = dv_dt + rate * k[:, None] * dv_dk
        denom = 0.5 * k[:, None] ** 2 * d2v
        radicand = numer / denom

    ok = computable & (denom > 0.0) & (radicand >= 0.0)
    values = np.full((n_k, n_t), np.nan)
    values[ok] = np.sqrt(radicand[ok])

    n_computable = int(computable.sum())
    n_invalid = int((computable & ~ok).sum())
    if n_computable and n_invalid > 0.5 * n_computable:
        raise DataError(
            f"local volatility extraction failed on {n_invalid}/{n_computable} cells"
        )
    return SurfaceGrid(t, k, values, "local_vol", ok)


def write_surface_csv(grid: SurfaceGrid, path) -> None:
    """One row per cell, ``kind,T,K,value,valid``; axes recoverable by sorting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for j, t in enumerate(grid.maturities):
            for i, k in enumerate(grid.strikes):
                writer.writerow(
                    [
                        grid.kind,
                        f"{t:.17g}",
                        f"{k:.17g}",
                        f"{grid.values[i, j]:.17g}",
                        int(grid.valid[i, j]),
                    ]
                )


def read_surface_csv(path) -> SurfaceGrid:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise DataError(f"{path}: unexpected surface header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                rows.append(
                    (row[0], float(row[1]), float(row[2]), float(row[3]), int(row[4]))
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty surface file")
    kinds = {r[0] for r in rows}
    if len(kinds) != 1:
        raise DataError(f"{path}: mixed surface kinds {sorted(kinds)}")
    kind = rows[0][0]
    maturities = np.array(sorted({r[1] for r in rows}))
    strikes = np.array(sorted({r[2] for r in rows}))
    t_idx = {t: j for j, t in enumerate(maturities)}
    k_idx = {k: i for i, k in enumerate(strikes)}
    values = np.full((strikes.size, maturities.size), np.nan)
    valid = np.zeros((strikes.size, maturities.size), dtype=bool)
    for _, t, k, value, ok in rows:
        values[k_idx[k], t_idx[t]] = value
        valid[k_idx[k], t_idx[t]] = bool(ok)
    return SurfaceGrid(maturities, strikes, values, kind, valid)
