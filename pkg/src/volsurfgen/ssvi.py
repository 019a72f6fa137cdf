"""Parametric total-variance surface with the Heston-like shape function.

The surface is

    w(k, theta_T) = theta_T/2 * (1 + rho*phi*k + sqrt((phi*k + rho)^2 + 1 - rho^2))

with k the log-moneyness ln(K/s0), theta_T the at-the-money total variance
interpolated linearly between maturity knots, and

    phi(theta) = (1/(lam*theta)) * (1 - (1 - e^{-lam*theta})/(lam*theta)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exceptions import DataError
from .surfaces import SurfaceGrid, to_total_variance
from .validation import check_ascending

#: search box for the shape parameters during fitting
_RHO_BOUNDS = (-0.99, 0.0)
_LAMBDA_BOUNDS = (1e-3, 50.0)

#: strikes further than this from the spot (in moneyness) do not qualify
#: as the at-the-money column
_ATM_MONEYNESS_TOL = 0.01


@dataclass(frozen=True)
class SsviParams:
    """Correlation, shape parameter and the ATM total-variance curve."""

    rho: float
    lam: float
    theta_maturities: np.ndarray
    theta_values: np.ndarray

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        object.__setattr__(
            self, "theta_maturities", check_ascending(self.theta_maturities, "theta_maturities")
        )
        tv = np.asarray(self.theta_values, dtype=float)
        if tv.shape != self.theta_maturities.shape:
            raise ValueError("theta curve arrays must have matching shapes")
        if np.any(tv <= 0.0):
            raise ValueError("theta values must be positive")
        if np.any(np.diff(tv) < 0.0):
            raise ValueError("theta values must be non-decreasing in maturity")
        object.__setattr__(self, "theta_values", tv)

    def theta(self, maturity):
        """ATM total variance, piecewise-linear between knots (clamped ends)."""
        return np.interp(maturity, self.theta_maturities, self.theta_values)


def heston_like_phi(theta, lam: float):
    """Shape function phi(theta); series for small lam*theta to avoid cancellation."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0.0):
        raise ValueError("theta must be positive")
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    x = lam * theta
    small = x < 1e-4
    x_safe = np.where(small, 1.0, x)
    direct = (1.0 + np.expm1(-x_safe) / x_safe) / x_safe
    series = 0.5 - x / 6.0
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def ssvi_total_variance(p: SsviParams, k_log, maturity):
    """Total variance at log-moneyness ``k_log`` and maturity."""
    k = np.asarray(k_log, dtype=float)
    theta = p.theta(maturity)
    phi = heston_like_phi(theta, p.lam)
    root = np.sqrt((phi * k + p.rho) ** 2 + (1.0 - p.rho**2))
    out = 0.5 * theta * (1.0 + p.rho * phi * k + root)
    return float(out) if out.ndim == 0 else out


def ssvi_fit(iv: SurfaceGrid, s0: float = 1.0) -> SsviParams:
    """Fit (rho, lam) to an implied-vol grid with theta pinned to the ATM column.

    theta_T is read off the strike nearest the spot (within 1% moneyness);
    the two shape parameters then minimize the squared total-variance error
    over all valid cells with a bounded Nelder-Mead search, which keeps the
    fit deterministic.
    """
    if iv.kind != "implied_vol":
        raise ValueError(f"expected an implied_vol grid, got {iv.kind!r}")
    atm_idx = int(np.argmin(np.abs(iv.strikes - s0)))
    if abs(iv.strikes[atm_idx] / s0 - 1.0) > _ATM_MONEYNESS_TOL:
        raise DataError(
            f"no strike within {_ATM_MONEYNESS_TOL:.0%} of the spot; "
            f"nearest is {iv.strikes[atm_idx]}"
        )
    if not iv.valid[atm_idx, :].all():
        raise DataError("ATM column contains invalid cells")

    maturities = iv.maturities
    theta = iv.values[atm_idx, :] ** 2 * maturities
    # enforce the calendar condition on the knots against FDM/inversion noise
    theta = np.maximum.accumulate(theta)

    w_grid = to_total_variance(iv)
    k_log = np.log(iv.strikes / s0)
    mask = iv.valid
    k_mat = np.broadcast_to(k_log[:, None], w_grid.values.shape)
    t_mat = np.broadcast_to(maturities[None, :], w_grid.values.shape)
    w_target = w_grid.values[mask]
    k_flat = k_mat[mask]
    t_flat = t_mat[mask]
    theta_flat = np.interp(t_flat, maturities, theta)

    def objective(x):
        rho, lam = x
        phi = heston_like_phi(theta_flat, lam)
        root = np.sqrt((phi * k_flat + rho) ** 2 + (1.0 - rho**2))
        w = 0.5 * theta_flat * (1.0 + rho * phi * k_flat + root)
        return np.sum((w - w_target) ** 2)

    res = minimize(
        objective,
        x0=np.array([-0.3, 1.0]),
        method="Nelder-Mead",
        bounds=[_RHO_BOUNDS, _LAMBDA_BOUNDS],
        options={"xatol": 1e-9, "fatol": 1e-16, "maxiter": 4000, "maxfev": 4000},
    )
    rho, lam = res.x
    return SsviParams(float(rho), float(lam), maturities.copy(), theta)


def save_params(p: SsviParams, path) -> None:
    """Flat key/value serialization of a fitted parameter set."""
    payload = {
        "rho": p.rho,
        "lam": p.lam,
        "theta_maturities": p.theta_maturities.tolist(),
        "theta_values": p.theta_values.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_params(path) -> SsviParams:
    with open(path) as fh:
        payload = json.load(fh)
    try:
        return SsviParams(
            float(payload["rho"]),
            float(payload["lam"]),
            np.asarray(payload["theta_maturities"], dtype=float),
            np.asarray(payload["theta_values"], dtype=float),
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing field {exc}") from exc
