"""Black-Scholes call pricing and implied-volatility inversion.

Every training target of the GP engine is produced by :func:`implied_vol`,
so the inversion is built to recover sigma to ~1e-10 even for deep
out-of-the-money quotes where the price itself is tiny.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

DAYS_PER_YEAR = 365.0

SIGMA_LOW = 1e-4
SIGMA_HIGH = 5.0
PRICE_TOL = 1e-8
SIGMA_TOL = 1e-12
MIN_VEGA = 1e-8
MAX_ITER = 200

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class NoRoot(ValueError):
    """The quoted price admits no positive implied volatility."""


class NonConvergence(RuntimeError):
    """The root finder exhausted its iteration budget."""


@dataclass(frozen=True)
class MarketQuote:
    spot: float
    strike: float
    call_price: float
    rate: float
    maturity: float

    def validate(self, allow_negative_rate: bool = False) -> None:
        if not (self.spot > 0 and self.strike > 0 and self.maturity > 0):
            raise ValueError(f"spot, strike and maturity must be positive: {self}")
        if not self.call_price >= 0:
            raise ValueError(f"call price must be non-negative: {self}")
        if self.rate < 0 and not allow_negative_rate:
            raise ValueError(f"negative rate {self.rate} rejected (allow_negative_rate=False)")


@dataclass(frozen=True)
class PricingResult:
    price: float
    d1: float
    d2: float


def norm_cdf(x):
    """Standard normal CDF; accepts scalars or arrays.

    Scalars go through ``erfc`` which keeps full relative accuracy in the
    lower tail, arrays through :func:`scipy.special.ndtr`.
    """
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    return ndtr(x)


def norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def intrinsic_floor(spot: float, strike: float, rate: float, maturity: float) -> float:
    """Merton lower bound ``max(S - K exp(-r tau), 0)`` for a European call."""
    return max(spot - strike * math.exp(-rate * maturity), 0.0)


def _d1_d2(spot, strike, rate, maturity, sigma):
    vol_sqrt_t = sigma * math.sqrt(maturity)
    d1 = (math.log(spot / strike) + (rate + 0.5 * sigma * sigma) * maturity) / vol_sqrt_t
    return d1, d1 - vol_sqrt_t


def _time_value(spot, strike, rate, maturity, sigma):
    """Call price minus the Merton floor, computed without cancellation.

    In the money the time value equals the parity put, whose terms are
    both small, so it keeps full relative precision.
    """
    d1, d2 = _d1_d2(spot, strike, rate, maturity, sigma)
    discounted_strike = strike * math.exp(-rate * maturity)
    if spot >= discounted_strike:
        tv = discounted_strike * norm_cdf(-d2) - spot * norm_cdf(-d1)
    else:
        tv = spot * norm_cdf(d1) - discounted_strike * norm_cdf(d2)
    return max(tv, 0.0), d1, d2


def bs_call_price(spot: float, strike: float, rate: float, maturity: float,
                  sigma: float) -> PricingResult:
    if not (spot > 0 and strike > 0 and maturity > 0 and sigma > 0):
        raise ValueError("spot, strike, maturity and sigma must all be positive")
    tv, d1, d2 = _time_value(spot, strike, rate, maturity, sigma)
    price = min(intrinsic_floor(spot, strike, rate, maturity) + tv, spot)
    return PricingResult(price=price, d1=d1, d2=d2)


def bs_vega(spot: float, strike: float, rate: float, maturity: float, sigma: float) -> float:
    d1, _ = _d1_d2(spot, strike, rate, maturity, sigma)
    return spot * norm_pdf(d1) * math.sqrt(maturity)


def implied_vol(quote: MarketQuote, *, allow_negative_rate: bool = False,
                price_tol: float = PRICE_TOL, max_iter: int = MAX_ITER) -> float:
    """Invert the Black-Scholes call price for sigma.

    Bisection on ``[SIGMA_LOW, SIGMA_HIGH]`` keeps a valid bracket at all
    times; a Newton step is taken instead of the midpoint whenever vega is
    usable and the step lands inside the bracket.

    Raises
    ------
    NoRoot
        The price violates ``S - K exp(-r tau) <= C < S`` or lies outside the
        prices reachable on the sigma bracket.
    NonConvergence
        The iteration budget was exhausted.
    """
    quote.validate(allow_negative_rate)
    S, K, r, tau, C = quote.spot, quote.strike, quote.rate, quote.maturity, quote.call_price
    if C < S - K * math.exp(-r * tau) or C >= S:
        raise NoRoot(f"call price {C} outside the arbitrage band for {quote}")

    target_tv = C - intrinsic_floor(S, K, r, tau)

    def excess(sigma: float) -> float:
        return _time_value(S, K, r, tau, sigma)[0] - target_tv

    lo, hi = SIGMA_LOW, SIGMA_HIGH
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo > 0 or f_hi < 0:
        raise NoRoot(f"call price {C} not reachable for sigma in [{lo}, {hi}]")
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi

    sigma = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = excess(sigma)
        if f == 0:
            return sigma
        if f < 0:
            lo = sigma
        else:
            hi = sigma
        vega = bs_vega(S, K, r, tau, sigma)
        step = f / vega if vega > MIN_VEGA else math.inf
        if abs(f) <= price_tol and abs(step) <= SIGMA_TOL:
            return sigma
        if hi - lo <= SIGMA_TOL * max(1.0, sigma):
            return 0.5 * (lo + hi)
        candidate = sigma - step
        sigma = candidate if lo < candidate < hi else 0.5 * (lo + hi)
    raise NonConvergence(f"implied vol did not converge in {max_iter} iterations for {quote}")
