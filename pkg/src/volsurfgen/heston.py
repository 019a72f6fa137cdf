"""Heston characteristic function and Fourier-cosine European call pricing.

The characteristic function uses the A/B/M/N closed form with the log-spot
convention x = ln(S_t) in the exponent. Two safeguards keep the evaluation
stable over the whole sampled parameter box:

* ``beta - M`` is formed through ``(beta^2 - M^2) / (beta + M)`` so the
  vol-of-variance limit gamma -> 0 degrades gracefully to the constant
  variance (GBM) characteristic function instead of cancelling to zero.
* the log term keeps the full N-ratio grouped inside a single principal
  branch logarithm, written in its reciprocal decaying-exponential form
  ``(1 - g e^{-M tau}) / (1 - g)`` with ``g = 1/N``.  The grouped ratio
  never crosses the negative real axis, so no rotation counting is needed
  and ``e^{+M tau}`` overflow cannot occur for long maturities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, NumericOverflowError

#: kappa is clamped to this floor inside the cumulant-based truncation
#: bounds only; the characteristic function itself uses the true kappa.
_CUMULANT_KAPPA_FLOOR = 1e-2


@dataclass(frozen=True)
class HestonParams:
    """Heston model parameters plus rate and spot.

    kappa : mean-reversion rate (1/yr)
    rho   : correlation between price and variance shocks
    gamma : volatility of variance (1/sqrt(yr))
    v_bar : long-run variance level (1/yr)
    v0    : initial variance (1/yr)
    r     : risk-free rate (1/yr)
    s0    : spot price
    """

    kappa: float
    rho: float
    gamma: float
    v_bar: float
    v0: float
    r: float
    s0: float = 1.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.v_bar > 0:
            raise ValueError(f"v_bar must be > 0, got {self.v_bar}")
        if not self.v0 > 0:
            raise ValueError(f"v0 must be > 0, got {self.v0}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")


@dataclass(frozen=True)
class CosConfig:
    """Numerical controls for the cosine-expansion pricer."""

    n_terms: int = 512
    trunc_width: float = 12.0

    def __post_init__(self):
        n = self.n_terms
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"n_terms must be a power of two >= 16, got {n}")
        if not self.trunc_width > 0:
            raise ValueError(f"trunc_width must be > 0, got {self.trunc_width}")


def _log1p_c(z):
    """Principal-branch log(1 + z) for complex z, accurate near z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    # series z - z^2/2 + z^3/3 - z^4/4, enough for |z| < 1e-4
    series = z * (1.0 - z * (0.5 - z * (1.0 / 3.0 - 0.25 * z)))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.log(np.where(small, 1.0, 1.0 + z))
    return np.where(small, series, direct)


def heston_charfn(p: HestonParams, v_t: float, tau: float, psi):
    """Characteristic function E[exp(i psi ln S_T)] at remaining time tau.

    ``psi`` may be a scalar or an ndarray; the return matches its shape.
    Raises NumericOverflowError if any intermediate is non-finite.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    psi_arr = np.asarray(psi, dtype=float)
    scalar = psi_arr.ndim == 0
    psi_arr = np.atleast_1d(psi_arr)

    iu = 1j * psi_arr
    c_psi = iu + psi_arr**2  # gamma^2 * c_psi = beta^2 - M^2 (negated)
    beta = p.kappa - p.rho * p.gamma * iu
    m = np.sqrt(beta * beta + p.gamma**2 * c_psi)  # Re(m) >= 0
    bpm = beta + m

    nonzero = psi_arr != 0.0
    bpm_safe = np.where(nonzero, bpm, 1.0)

    g = -(p.gamma**2) * c_psi / (bpm_safe * bpm_safe)  # (beta - m)/(beta + m)
    e = np.exp(-m * tau)
    b = -c_psi * (1.0 - e) / (bpm_safe * (1.0 - g * e))

    a_drift = 1j * p.r * psi_arr * tau
    a_lin = -p.kappa * p.v_bar * tau * c_psi / bpm_safe
    if p.gamma > 1e-8:
        log_ratio = _log1p_c(-g * e) - _log1p_c(-g)
        a_log = -2.0 * p.kappa * p.v_bar * log_ratio / p.gamma**2
    else:
        # gamma -> 0 limit of the log term
        a_log = 2.0 * p.kappa * p.v_bar * c_psi * (1.0 - e) / (bpm_safe * bpm_safe)

    val = np.exp(a_drift + a_lin + a_log + b * v_t + iu * np.log(p.s0))
    val = np.where(nonzero, val, 1.0 + 0.0j)
    if not np.all(np.isfinite(val)):
        raise NumericOverflowError(
            "non-finite value in Heston characteristic function "
            f"(tau={tau}, kappa={p.kappa}, gamma={p.gamma})"
        )
    return val[0] if scalar else val


def log_return_cumulants(p: HestonParams, tau: float):
    """First two cumulants of ln(S_T / S_0) used for the truncation range.

    kappa is floored at a small positive value here; the interval is a
    truncation control only, so the error is immaterial.
    """
    k = max(p.kappa, _CUMULANT_KAPPA_FLOOR)
    g, rho, vb, v0 = p.gamma, p.rho, p.v_bar, p.v0
    ekt = np.exp(-k * tau)
    c1 = p.r * tau + (1.0 - ekt) * (vb - v0) / (2.0 * k) - 0.5 * vb * tau
    c2 = (
        g * tau * k * ekt * (v0 - vb) * (8.0 * k * rho - 4.0 * g)
        + k * rho * g * (1.0 - ekt) * (16.0 * vb - 8.0 * v0)
        + 2.0 * vb * k * tau * (-4.0 * k * rho * g + g**2 + 4.0 * k**2)
        + g**2 * ((vb - 2.0 * v0) * ekt**2 + vb * (6.0 * ekt - 7.0) + 2.0 * v0)
        + 8.0 * k**2 * (v0 - vb) * (1.0 - ekt)
    ) / (8.0 * k**3)
    return c1, c2


def _chi_psi(u, c_rel, d_rel, e_c, e_d):
    """Cosine-basis integrals of e^y and 1 over [c, d] inside [a, b].

    Arguments are relative to a: c_rel = c - a, d_rel = d - a; e_c/e_d are
    exp(c)/exp(d). Shapes: u is (N,), the rest (m,); returns (m, N) pairs.
    """
    u = u[None, :]
    c = c_rel[:, None]
    d = d_rel[:, None]
    ec = e_c[:, None]
    ed = e_d[:, None]
    chi = (
        np.cos(u * d) * ed
        - np.cos(u * c) * ec
        + u * np.sin(u * d) * ed
        - u * np.sin(u * c) * ec
    ) / (1.0 + u * u)
    psi = np.empty_like(chi)
    psi[:, 1:] = (np.sin(u[:, 1:] * d) - np.sin(u[:, 1:] * c)) / u[:, 1:]
    psi[:, 0] = (d - c)[:, 0]
    return chi, psi


def _cos_price(p, strike, maturity, cfg, call):
    strikes = np.atleast_1d(np.asarray(strike, dtype=float))
    if np.any(strikes <= 0):
        raise ValueError("strike must be > 0")
    if not maturity > 0:
        raise ValueError(f"maturity must be > 0, got {maturity}")

    c1, c2 = log_return_cumulants(p, maturity)
    half = cfg.trunc_width * np.sqrt(abs(c2))
    width = 2.0 * half
    # interval per strike: [a, b] = ln(s0/K) + c1 -+ half; width is shared,
    # so the characteristic-function sweep is shared across strikes
    n = np.arange(cfg.n_terms, dtype=float)
    u = n * np.pi / width

    cf = heston_charfn(p, p.v0, maturity, u)
    # phase e^{-i u (ln K + a)}; ln K + a = ln s0 + c1 - half for every strike
    weights = np.real(cf * np.exp(-1j * u * (np.log(p.s0) + c1 - half)))
    weights[0] *= 0.5

    # payoff kink y = 0 relative to a, clipped into the interval so the
    # coefficients never extrapolate the series outside [a, b]
    kink = np.clip(half - c1 + np.log(strikes / p.s0), 0.0, width)
    e_kink = (p.s0 / strikes) * np.exp(c1 - half + kink)
    if call:
        e_b = (p.s0 / strikes) * np.exp(c1 + half)
        chi, psi = _chi_psi(u, kink, np.full_like(kink, width), e_kink, e_b)
        coef = chi - psi
    else:
        e_a = (p.s0 / strikes) * np.exp(c1 - half)
        chi, psi = _chi_psi(u, np.zeros_like(kink), kink, e_a, e_kink)
        coef = psi - chi

    disc = np.exp(-p.r * maturity)
    prices = disc * (2.0 / width) * strikes * (coef @ weights)
    return prices, disc


def cos_call_price(p: HestonParams, strike, maturity: float, cfg: CosConfig | None = None):
    """European call price by cosine expansion of the Heston density.

    ``strike`` may be a scalar or a vector; maturity is a single year
    fraction. The result is checked against the static no-arbitrage
    bracket [max(s0 - K e^{-rT}, 0), s0]; a breach beyond 1e-8 * s0
    raises ConvergenceError (increase ``n_terms``).
    """
    cfg = cfg or CosConfig()
    prices, disc = _cos_price(p, strike, maturity, cfg, call=True)
    strikes = np.atleast_1d(np.asarray(strike, dtype=float))
    tol = 1e-8 * p.s0
    lower = np.maximum(p.s0 - strikes * disc, 0.0)
    if np.any(prices < lower - tol) or np.any(prices > p.s0 + tol):
        raise ConvergenceError(
            "COS call price breaches the no-arbitrage bracket; "
            f"n_terms={cfg.n_terms} is likely too small"
        )
    return float(prices[0]) if np.isscalar(strike) or np.ndim(strike) == 0 else prices


def cos_put_price(p: HestonParams, strike, maturity: float, cfg: CosConfig | None = None):
    """European put price by the same expansion with put payoff coefficients."""
    cfg = cfg or CosConfig()
    prices, disc = _cos_price(p, strike, maturity, cfg, call=False)
    strikes = np.atleast_1d(np.asarray(strike, dtype=float))
    tol = 1e-8 * p.s0
    upper = strikes * disc
    lower = np.maximum(upper - p.s0, 0.0)
    if np.any(prices < lower - tol) or np.any(prices > upper + tol):
        raise ConvergenceError(
            "COS put price breaches the no-arbitrage bracket; "
            f"n_terms={cfg.n_terms} is likely too small"
        )
    return float(prices[0]) if np.isscalar(strike) or np.ndim(strike) == 0 else prices
