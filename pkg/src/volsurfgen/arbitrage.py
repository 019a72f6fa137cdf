"""Static-arbitrage risk functionals on total variance and surface audits.

The calendar risk is the maturity slope of total variance; the butterfly
risk is

    l_but = (1 - k*dw/(2w))^2 - (dw/4)*(1/w + 1/4) + d2w/2

evaluated with finite differences, where dw and d2w are the first and
second log-moneyness derivatives. Negative values flag arbitrage. The
penalty aggregates are batch means of the hinge terms max(0, -l) plus the
mean absolute curvature |d2w| for the large-moneyness limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .surfaces import SurfaceGrid, to_total_variance

#: default finite-difference probe step (both log-moneyness and maturity)
DEFAULT_PROBE = 1e-3

#: slack applied before a cell counts as a violation, so float noise on an
#: exactly-flat surface is not reported
COUNT_TOL = 1e-8


@dataclass(frozen=True)
class PenaltyWeights:
    """Weights of the penalty terms in the generator objective."""

    lambda_calendar: float = 1.0
    lambda_butterfly: float = 1.0
    lambda_wing: float = 1e-4
    lambda_adversarial: float = 0.05

    def __post_init__(self):
        for name in ("lambda_calendar", "lambda_butterfly", "lambda_wing"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.lambda_adversarial <= 1.0:
            raise ValueError("lambda_adversarial must lie in [0, 1]")

    def disabled(self) -> "PenaltyWeights":
        """Copy with the three no-arbitrage weights switched off."""
        return PenaltyWeights(0.0, 0.0, 0.0, self.lambda_adversarial)


@dataclass
class ArbitrageReport:
    """Violation counts and worst risk values over a surface grid."""

    butterfly_violations: int
    calendar_violations: int
    total_cells: int
    min_l_but: float
    min_l_cal: float

    def __post_init__(self):
        if self.butterfly_violations > self.total_cells:
            raise ValueError("butterfly violations exceed cell count")
        if self.calendar_violations > self.total_cells:
            raise ValueError("calendar violations exceed cell count")

    def to_dict(self):
        return {
            "butterfly_violations": self.butterfly_violations,
            "calendar_violations": self.calendar_violations,
            "total_cells": self.total_cells,
            "min_l_but": self.min_l_but,
            "min_l_cal": self.min_l_cal,
        }


def butterfly_risk_from_samples(w_c, w_km, w_kp, k, h):
    """Butterfly risk from total variance at k and k -+ h (vectorized)."""
    dw = (w_kp - w_km) / (2.0 * h)
    d2w = (w_kp - 2.0 * w_c + w_km) / (h * h)
    q = 1.0 - k * dw / (2.0 * w_c)
    return q * q - (dw / 4.0) * (1.0 / w_c + 0.25) + 0.5 * d2w


def l_cal(omega, k: float, t: float, probe: float = DEFAULT_PROBE, t_bounds=None) -> float:
    """Maturity slope of total variance by central difference.

    ``omega`` is a callable w(k, T). With ``t_bounds`` given, edge points
    fall back to one-sided differences; if neither side is evaluable an
    error is raised.
    """
    h = probe
    lo_ok = t_bounds is None or t - h >= t_bounds[0]
    hi_ok = t_bounds is None or t + h <= t_bounds[1]
    if lo_ok and hi_ok:
        return (omega(k, t + h) - omega(k, t - h)) / (2.0 * h)
    if hi_ok:
        return (omega(k, t + h) - omega(k, t)) / h
    if lo_ok:
        return (omega(k, t) - omega(k, t - h)) / h
    raise DomainError(
        f"maturity domain {t_bounds} cannot accommodate probes around T={t}"
    )


def l_but(omega, k: float, t: float, probe: float = DEFAULT_PROBE) -> float:
    """Butterfly risk at (k, T) from central log-moneyness probes."""
    h = probe
    w_c = omega(k, t)
    if w_c <= 0.0:
        raise DomainError(f"total variance must be positive, got {w_c} at k={k}, T={t}")
    w_kp = omega(k + h, t)
    w_km = omega(k - h, t)
    return float(butterfly_risk_from_samples(w_c, w_km, w_kp, k, h))


def penalty_terms(omega, sample_points, probe: float = DEFAULT_PROBE, t_bounds=None):
    """(L_cal, L_butterfly, L_wing) hinge/curvature means over sample points.

    ``sample_points`` is an iterable of (k, T) pairs; M = len(points).
    """
    points = list(sample_points)
    if not points:
        raise ValueError("sample_points must be non-empty")
    h = probe
    cal_hinges = []
    but_hinges = []
    wings = []
    for k, t in points:
        slope = l_cal(omega, k, t, probe=h, t_bounds=t_bounds)
        cal_hinges.append(max(0.0, -slope))
        risk = l_but(omega, k, t, probe=h)
        but_hinges.append(max(0.0, -risk))
        d2w = (omega(k + h, t) - 2.0 * omega(k, t) + omega(k - h, t)) / (h * h)
        wings.append(abs(d2w))
    return (
        float(np.mean(cal_hinges)),
        float(np.mean(but_hinges)),
        float(np.mean(wings)),
    )


def grid_butterfly_risk(w: np.ndarray, k_log: np.ndarray):
    """Butterfly risk on interior strikes of a total-variance grid.

    Non-uniform three-point stencils in log-moneyness; returns an array of
    shape (I-2, J) aligned with k_log[1:-1].
    """
    h_lo = (k_log[1:-1] - k_log[:-2])[:, None]
    h_hi = (k_log[2:] - k_log[1:-1])[:, None]
    denom = h_lo * h_hi * (h_lo + h_hi)
    w_lo, w_c, w_hi = w[:-2, :], w[1:-1, :], w[2:, :]
    dw = (w_hi * h_lo**2 - w_lo * h_hi**2 + w_c * (h_hi**2 - h_lo**2)) / denom
    d2w = 2.0 * (w_lo * h_hi - w_c * (h_lo + h_hi) + w_hi * h_lo) / denom
    k = k_log[1:-1, None]
    q = 1.0 - k * dw / (2.0 * w_c)
    return q * q - (dw / 4.0) * (1.0 / w_c + 0.25) + 0.5 * d2w


def audit_surface(iv: SurfaceGrid, s0: float = 1.0, tol: float = COUNT_TOL) -> ArbitrageReport:
    """Count butterfly and calendar violations of an implied-vol grid.

    The surface is converted to total variance; butterfly risk uses grid
    stencils over interior strikes, the calendar check counts adjacent
    maturity pairs where total variance decreases beyond ``tol``. Cells
    marked invalid are skipped.
    """
    n_k, n_t = iv.shape
    if n_k < 3 or n_t < 2:
        raise ValueError(f"audit needs >= 3 strikes and >= 2 maturities, got {iv.shape}")
    w_grid = to_total_variance(iv)
    w = np.where(w_grid.valid, w_grid.values, np.nan)
    k_log = np.log(iv.strikes / s0)

    with np.errstate(invalid="ignore", divide="ignore"):
        risk = grid_butterfly_risk(w, k_log)
    risk_ok = np.isfinite(risk)
    butterfly = int(np.sum(risk[risk_ok] < -tol))
    min_l_but = float(np.min(risk[risk_ok])) if risk_ok.any() else np.nan

    diff = w[:, 1:] - w[:, :-1]
    span = (w_grid.maturities[1:] - w_grid.maturities[:-1])[None, :]
    slope = diff / span
    pair_ok = np.isfinite(diff)
    calendar = int(np.sum(diff[pair_ok] < -tol))
    min_l_cal = float(np.min(slope[pair_ok])) if pair_ok.any() else np.nan

    return ArbitrageReport(
        butterfly_violations=butterfly,
        calendar_violations=calendar,
        total_cells=n_k * n_t,
        min_l_but=min_l_but,
        min_l_cal=min_l_cal,
    )
