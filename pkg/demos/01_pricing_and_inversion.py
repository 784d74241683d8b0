"""
Black-Scholes prices and implied volatility
===========================================

The fitness targets are implied volatilities: the sigma at which the
Black-Scholes call price matches the quoted price.  This script prices a
few calls, inverts them again and shows what happens when a quote breaks
the no-arbitrage band.
"""

import math

import numpy as np

from ivgp.option_math import MarketQuote, NoRoot, bs_call_price, bs_vega, implied_vol

# the textbook at-the-money call: S = K = 100, r = 5%, one year, 20% vol
res = bs_call_price(100.0, 100.0, 0.05, 1.0, 0.20)
print(f"call price {res.price:.6f}  d1 {res.d1:.4f}  d2 {res.d2:.4f}")

# pricing and inverting recovers sigma
quote = MarketQuote(spot=100.0, strike=105.0, call_price=bs_call_price(100, 105, 0.03, 0.5, 0.35).price,
                    rate=0.03, maturity=0.5)
print("recovered sigma", implied_vol(quote))

# a small smile: implied vols across strikes for one maturity
for strike in np.linspace(90, 110, 5):
    sigma = 0.18 + 0.5 * math.log(100 / strike) ** 2
    c = bs_call_price(100.0, strike, 0.01, 0.25, sigma).price
    back = implied_vol(MarketQuote(100.0, strike, c, 0.01, 0.25))
    print(f"K={strike:6.1f}  C={c:8.4f}  sigma={back:.6f}")

# a quote below the discounted intrinsic value has no implied volatility
floor = 100.0 - 90.0 * math.exp(-0.03 * 0.5)
try:
    implied_vol(MarketQuote(100.0, 90.0, floor - 0.01, 0.03, 0.5))
except NoRoot as exc:
    print("rejected:", exc)

# deep in the money at low volatility the time value drops below one ulp
# of the price, so the price no longer pins sigma down
s, k, r, tau, sigma = 120.0, 100.0, 0.0, 0.05, 0.1
c = bs_call_price(s, k, r, tau, sigma).price
print("sigma resolution of this price:", np.spacing(c) / bs_vega(s, k, r, tau, sigma))
