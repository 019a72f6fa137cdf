"""Black-Scholes call pricing and implied volatility via Brent's method."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq
from scipy.special import ndtr

from .exceptions import BracketError, ConvergenceError, InvalidPriceError

#: prices this close to the intrinsic bound are lifted onto bound + clamp
#: before inversion, which stabilizes near-expiry deep-ITM rows
_INTRINSIC_CLAMP = 1e-12

_DEFAULT_BRACKET = (1e-6, 5.0)
_MAX_ITER = 200


@dataclass(frozen=True)
class BsQuote:
    """A single European call quote in Black-Scholes coordinates."""

    s0: float
    strike: float
    maturity: float
    rate: float
    sigma: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")
        if not self.strike > 0:
            raise ValueError(f"strike must be > 0, got {self.strike}")
        if not self.maturity > 0:
            raise ValueError(f"maturity must be > 0, got {self.maturity}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def bs_call(q: BsQuote) -> float:
    """Closed-form Black-Scholes call value; sigma = 0 returns the forward intrinsic."""
    disc_k = q.strike * math.exp(-q.rate * q.maturity)
    if q.sigma == 0.0:
        return max(q.s0 - disc_k, 0.0)
    vol = q.sigma * math.sqrt(q.maturity)
    d1 = (math.log(q.s0 / q.strike) + (q.rate + 0.5 * q.sigma**2) * q.maturity) / vol
    d2 = d1 - vol
    return q.s0 * ndtr(d1) - disc_k * ndtr(d2)


def implied_vol_brent(
    price: float,
    s0: float,
    strike: float,
    maturity: float,
    rate: float,
    bracket=_DEFAULT_BRACKET,
    tol: float | None = None,
) -> float:
    """Invert a call price to its Black-Scholes volatility.

    The price must lie strictly inside (max(s0 - K e^{-rT}, 0), s0).
    Returns sigma with |bs_call(sigma) - price| <= tol (default 1e-10 * s0).

    Raises InvalidPriceError outside the arbitrage bracket, BracketError
    when [lo, hi] does not straddle the root, ConvergenceError when the
    price tolerance cannot be met.
    """
    if tol is None:
        tol = 1e-10 * s0
    intrinsic = max(s0 - strike * math.exp(-rate * maturity), 0.0)
    if price >= s0:
        raise InvalidPriceError(f"price {price} >= spot {s0}")
    if price <= intrinsic:
        if price >= intrinsic - _INTRINSIC_CLAMP:
            price = intrinsic + _INTRINSIC_CLAMP
        else:
            raise InvalidPriceError(
                f"price {price} below intrinsic bound {intrinsic}"
            )

    lo, hi = bracket

    def objective(sigma):
        return bs_call(BsQuote(s0, strike, maturity, rate, sigma)) - price

    f_lo, f_hi = objective(lo), objective(hi)
    if f_lo > 0.0 or f_hi < 0.0:
        raise BracketError(
            f"implied vol not bracketed by [{lo}, {hi}] "
            f"(f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e})"
        )
    try:
        sigma = brentq(objective, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=_MAX_ITER)
    except RuntimeError as exc:  # scipy raises RuntimeError past maxiter
        raise BracketError(f"Brent did not converge in {_MAX_ITER} iterations") from exc
    residual = objective(sigma)
    if abs(residual) > tol:
        raise ConvergenceError(
            f"implied vol residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )
    return sigma
