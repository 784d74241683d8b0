"""Black-Scholes pricing and implied-volatility inversion.

Oracles here are built independently of the engine: the normal CDF by
quadrature of the density, and the call price by integrating the
discounted payoff against the lognormal terminal distribution.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ivgp.option_math import (
    MarketQuote,
    NoRoot,
    bs_call_price,
    bs_vega,
    implied_vol,
    intrinsic_floor,
    norm_cdf,
)


def cdf_by_quadrature(x):
    density = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    if x < 0:
        val, _ = integrate.quad(density, -np.inf, x, epsabs=1e-16, epsrel=1e-13)
        return val
    val, _ = integrate.quad(density, 0.0, x, epsabs=1e-16, epsrel=1e-13)
    return 0.5 + val


def call_by_quadrature(s, k, r, tau, sigma):
    """Discounted expected payoff under the risk-neutral lognormal law."""
    drift = (r - 0.5 * sigma ** 2) * tau
    vol = sigma * math.sqrt(tau)
    z0 = (math.log(k / s) - drift) / vol  # payoff is positive above z0
    integrand = lambda z: (s * math.exp(drift + vol * z) - k) * math.exp(-0.5 * z * z)
    val, _ = integrate.quad(integrand, z0, z0 + 40.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return math.exp(-r * tau) * val / math.sqrt(2 * math.pi)


class TestNormCdf:
    def test_zero(self):
        assert norm_cdf(0.0) == 0.5

    @pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, -0.2, 0.4, 1.959964, 2.5, 6.0])
    def test_matches_quadrature(self, x):
        assert abs(norm_cdf(x) - cdf_by_quadrature(x)) <= 1e-10

    def test_97_5_percent_quantile(self):
        assert norm_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)

    def test_deep_left_tail(self):
        assert norm_cdf(-8.0) < 1e-14
        assert norm_cdf(-8.0) > 0

    def test_vectorised_matches_scalar(self):
        xs = np.linspace(-6, 6, 101)
        assert np.allclose(norm_cdf(xs), [norm_cdf(float(x)) for x in xs], rtol=0, atol=1e-15)

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert abs(norm_cdf(x) + norm_cdf(-x) - 1.0) <= 1e-12

    @given(st.floats(-30, 30), st.floats(0, 5))
    def test_monotone(self, x, dx):
        assert norm_cdf(x) <= norm_cdf(x + dx)


class TestCallPrice:
    def test_textbook_atm_value(self):
        # S=K=100, r=5%, one year, 20% vol
        res = bs_call_price(100, 100, 0.05, 1.0, 0.2)
        assert res.price == pytest.approx(10.4506, abs=1e-3)
        assert res.price == pytest.approx(call_by_quadrature(100, 100, 0.05, 1.0, 0.2), abs=1e-9)

    def test_zero_rate_atm_closed_form(self):
        # d1 = 0.1, d2 = -0.1 so C = 100 (2 Phi(0.1) - 1)
        expected = 100 * (2 * cdf_by_quadrature(0.1) - 1)
        assert bs_call_price(100, 100, 0.0, 1.0, 0.2).price == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("s,k,r,tau,sigma", [
        (100, 105, 0.03, 0.5, 0.35), (90, 100, 0.0, 0.1, 0.15), (120, 100, 0.03, 2.0, 0.6),
        (1000, 950, 0.012, 0.25, 0.18), (50, 60, 0.05, 1.5, 1.0)])
    def test_matches_quadrature(self, s, k, r, tau, sigma):
        assert bs_call_price(s, k, r, tau, sigma).price == pytest.approx(
            call_by_quadrature(s, k, r, tau, sigma), rel=1e-9, abs=1e-10)

    def test_d2_relation(self):
        res = bs_call_price(100, 95, 0.02, 0.7, 0.3)
        assert res.d2 == pytest.approx(res.d1 - 0.3 * math.sqrt(0.7), abs=1e-15)

    def test_small_sigma_tends_to_intrinsic(self):
        s, k, r, tau = 100.0, 95.0, 0.03, 0.5
        assert bs_call_price(s, k, r, tau, 1e-6).price == pytest.approx(
            s - k * math.exp(-r * tau), abs=1e-9)

    @pytest.mark.parametrize("bad", [(0, 100, 0, 1, 0.2), (100, -1, 0, 1, 0.2),
                                     (100, 100, 0, 0, 0.2), (100, 100, 0, 1, 0)])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            bs_call_price(*bad)

    @settings(max_examples=200)
    @given(st.floats(0.5, 2.0), st.floats(0.01, 3.0), st.floats(0, 0.1),
           st.floats(0.01, 2.0), st.floats(0.01, 1.0))
    def test_no_arbitrage_band_and_sigma_monotone(self, m, tau, r, s1, s2):
        s, k = 100.0 * m, 100.0
        lo, hi = sorted((s1, s2))
        p_lo = bs_call_price(s, k, r, tau, lo).price
        p_hi = bs_call_price(s, k, r, tau, hi).price
        floor = intrinsic_floor(s, k, r, tau)
        for p in (p_lo, p_hi):
            assert floor - 1e-9 <= p <= s
        assert p_lo <= p_hi
        # strict only where the change exceeds the price resolution
        if bs_vega(s, k, r, tau, lo) * (hi - lo) > 1e-12 * s:
            assert p_lo < p_hi

    @given(st.floats(0.7, 1.3), st.floats(0.05, 2.0), st.floats(0.05, 1.0))
    def test_spot_and_strike_direction(self, m, tau, sigma):
        base = bs_call_price(100 * m, 100, 0.02, tau, sigma).price
        assert bs_call_price(100 * m + 0.5, 100, 0.02, tau, sigma).price > base
        assert bs_call_price(100 * m, 100.5, 0.02, tau, sigma).price < base

    def test_vega_matches_finite_difference(self):
        h = 1e-5
        fd = (bs_call_price(100, 105, 0.03, 0.5, 0.35 + h).price
              - bs_call_price(100, 105, 0.03, 0.5, 0.35 - h).price) / (2 * h)
        assert bs_vega(100, 105, 0.03, 0.5, 0.35) == pytest.approx(fd, rel=1e-7)


class TestImpliedVol:
    def test_round_trip_example(self):
        c = bs_call_price(100, 105, 0.03, 0.5, 0.35).price
        assert implied_vol(MarketQuote(100, 105, c, 0.03, 0.5)) == pytest.approx(0.35, abs=1e-6)

    def test_round_trip_well_conditioned_grid(self):
        # points where the price carries enough significant digits of sigma
        worst = 0.0
        for sigma in np.arange(1, 21) * 0.05:
            for m in np.arange(16, 25) * 0.05:
                for tau in 0.05 + np.arange(14) * 0.15:
                    for r in (0.0, 0.03):
                        s, k = 100 * m, 100.0
                        c = bs_call_price(s, k, r, tau, sigma).price
                        vega = bs_vega(s, k, r, tau, sigma)
                        if 4 * np.spacing(c) / vega > 1e-7:
                            continue
                        worst = max(worst, abs(implied_vol(MarketQuote(s, k, c, r, tau)) - sigma))
        assert worst <= 1e-6

    def test_below_intrinsic_raises(self):
        s, k, r, tau = 100.0, 90.0, 0.03, 0.5
        floor = s - k * math.exp(-r * tau)
        with pytest.raises(NoRoot):
            implied_vol(MarketQuote(s, k, floor - 1e-3, r, tau))

    def test_zero_price_in_the_money_raises(self):
        with pytest.raises(NoRoot):
            implied_vol(MarketQuote(100, 90, 0.0, 0.03, 0.5))

    def test_price_at_spot_raises(self):
        with pytest.raises(NoRoot):
            implied_vol(MarketQuote(100, 90, 100.0, 0.03, 0.5))

    def test_negative_rate_rejected_by_default(self):
        c = bs_call_price(100, 100, -0.01, 0.5, 0.2).price
        with pytest.raises(ValueError):
            implied_vol(MarketQuote(100, 100, c, -0.01, 0.5))
        assert implied_vol(MarketQuote(100, 100, c, -0.01, 0.5),
                           allow_negative_rate=True) == pytest.approx(0.2, abs=1e-8)

    def test_repricing_within_price_tolerance(self):
        q = MarketQuote(917.0, 900.0, 41.3, 0.012, 73 / 365)
        sigma = implied_vol(q)
        assert abs(bs_call_price(q.spot, q.strike, q.rate, q.maturity, sigma).price
                   - q.call_price) <= 1e-8
