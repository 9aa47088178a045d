"""Black-Scholes reference machinery.

Lognormal density, closed-form call price, a quadrature oracle for the
closed form, implied-volatility inversion, and the constant market offset
subtracted from the players' volatility.  Everything uses the undiscounted
forward convention: the Monte Carlo payoff average carries no discount
factor, so the inversion must not either (a `discounted` flag exists for
completeness but defaults off).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .errors import ConvergenceError, DomainError, NoConvergenceError, OutOfBandError
from .surface_io import ImpliedVolSurfacePoint, VolSurface

if TYPE_CHECKING:  # pragma: no cover
    from .mc_engine import PayoffGrid

SIGMA_LO = 1e-6
SIGMA_HI = 20.0
MAX_ITER = 200


@dataclass(frozen=True)
class BsInputs:
    """Inputs of the Black-Scholes call formulas; mu is the prime rate."""

    spot: float
    strike: float
    mu: float
    sigma: float
    maturity: float

    def __post_init__(self):
        if self.spot <= 0.0 or self.strike <= 0.0:
            raise DomainError("spot and strike must be positive")
        if self.maturity <= 0.0:
            raise DomainError(f"maturity must be positive, got {self.maturity}")
        if self.sigma < 0.0:
            raise DomainError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def forward(self) -> float:
        return self.spot * math.exp(self.mu * self.maturity)


def lognormal_density(s, inputs: BsInputs):
    """Density of the stock price at maturity under d log S = (mu - sigma^2/2) dt + sigma dz.

    Vectorized over s; zero for s <= 0.  Requires sigma > 0.
    """
    if inputs.sigma <= 0.0:
        raise DomainError("density requires sigma > 0 (sigma = 0 is a point mass)")
    s = np.asarray(s, dtype=float)
    t = inputs.maturity
    sig_sq_t = inputs.sigma**2 * t
    out = np.zeros_like(s)
    pos = s > 0.0
    sp = s[pos]
    z = np.log(sp / inputs.spot) - (inputs.mu - 0.5 * inputs.sigma**2) * t
    out[pos] = np.exp(-z * z / (2.0 * sig_sq_t)) / (sp * math.sqrt(2.0 * math.pi * sig_sq_t))
    if out.ndim == 0:
        return float(out)
    return out


def call_payoff(s, strike: float):
    """Plain vanilla call payoff max(0, S - K); vectorized over s."""
    return np.maximum(np.asarray(s, dtype=float) - strike, 0.0)


def call_price_closed(inputs: BsInputs, discounted: bool = False) -> float:
    """Undiscounted expectation of the call payoff under the lognormal density.

    E[max(S_t - K, 0)] = F Phi(d1) - K Phi(d2) with F = spot e^{mu t},
    d1 = [log(spot/K) + (mu + sigma^2/2) t] / (sigma sqrt(t)) and
    d2 = d1 - sigma sqrt(t); sigma = 0 degenerates to max(F - K, 0).
    """
    f = inputs.forward
    k = inputs.strike
    t = inputs.maturity
    df = math.exp(-inputs.mu * t) if discounted else 1.0
    vol = inputs.sigma * math.sqrt(t)
    if vol < 1e-14:
        return df * max(f - k, 0.0)
    d1 = (math.log(inputs.spot / k) + (inputs.mu + 0.5 * inputs.sigma**2) * t) / vol
    d2 = d1 - vol
    return df * (f * norm.cdf(d1) - k * norm.cdf(d2))


def call_price_integral(inputs: BsInputs, abs_tol: float = 1e-8, discounted: bool = False) -> float:
    """Quadrature oracle: integrate the payoff against the lognormal density.

    Raises ConvergenceError if the quadrature error estimate exceeds abs_tol.
    """
    if abs_tol < 1e-10:
        raise DomainError(f"abs_tol must be at least 1e-10, got {abs_tol}")
    df = math.exp(-inputs.mu * inputs.maturity) if discounted else 1.0
    vol = inputs.sigma * math.sqrt(inputs.maturity)
    if vol < 1e-14:
        return df * max(inputs.forward - inputs.strike, 0.0)

    def integrand(s):
        return (s - inputs.strike) * lognormal_density(s, inputs)

    value, err = quad(
        integrand,
        inputs.strike,
        np.inf,
        epsabs=abs_tol * 0.25,
        epsrel=1e-12,
        limit=200,
    )
    if err > abs_tol:
        raise ConvergenceError(
            f"quadrature error {err:.3e} above requested tolerance {abs_tol:.3e}"
        )
    return df * value


def vega(inputs: BsInputs) -> float:
    """d(call)/d(sigma) of the undiscounted closed form: F phi(d1) sqrt(t)."""
    vol = inputs.sigma * math.sqrt(inputs.maturity)
    if vol < 1e-14:
        return 0.0
    d1 = (
        math.log(inputs.spot / inputs.strike) + (inputs.mu + 0.5 * inputs.sigma**2) * inputs.maturity
    ) / vol
    return inputs.forward * norm.pdf(d1) * math.sqrt(inputs.maturity)


def implied_vol(
    price: float,
    spot: float,
    strike: float,
    mu: float,
    maturity: float,
    tol: float = 1e-8,
    discounted: bool = False,
) -> float:
    """Volatility whose closed-form call price matches the given price.

    Safeguarded Newton with a bisection fallback on [SIGMA_LO, SIGMA_HI].
    Raises OutOfBandError if price lies outside the arbitrage band
    (max(F - K, 0), F) and NoConvergenceError after MAX_ITER iterations.
    """
    f = spot * math.exp(mu * maturity)
    df = math.exp(-mu * maturity) if discounted else 1.0
    lo_band = df * max(f - strike, 0.0)
    hi_band = df * f
    if not lo_band < price < hi_band:
        raise OutOfBandError(
            f"price {price:.6g} outside arbitrage band ({lo_band:.6g}, {hi_band:.6g})"
        )

    def priced(sig: float) -> float:
        return call_price_closed(BsInputs(spot, strike, mu, sig, maturity), discounted)

    lo, hi = SIGMA_LO, SIGMA_HI
    if price <= priced(lo):
        return lo
    if price >= priced(hi):
        raise NoConvergenceError(
            f"implied vol above bracket top {SIGMA_HI}; price {price:.6g}"
        )
    sigma = 0.5
    for _ in range(MAX_ITER):
        diff = priced(sigma) - price
        if abs(diff) < tol:
            return sigma
        if diff > 0.0:
            hi = sigma
        else:
            lo = sigma
        v = df * vega(BsInputs(spot, strike, mu, sigma, maturity))
        if v > 1e-12:
            candidate = sigma - diff / v
        else:
            candidate = math.nan
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        sigma = candidate
    raise NoConvergenceError(f"implied vol did not converge in {MAX_ITER} iterations")


def apply_market_offset(sigma_players: float, delta_market: float) -> float:
    """Implied vol after the market's constant damping: sigma_players - delta_market.

    May be non-positive; callers must reject non-positive values before
    reporting them as market-style vols.
    """
    return sigma_players - delta_market


@dataclass
class SurfaceInversion:
    """Per-cell implied vols recovered from a Monte Carlo payoff grid.

    sigma_raw is the players' volatility before the market offset; sigma is
    the post-offset surface; sigma_err the delta-method standard error of
    the inversion; NaN marks cells whose price could not be inverted.
    """

    maturities: np.ndarray
    eff_maturities: np.ndarray
    strikes: np.ndarray
    sigma_raw: np.ndarray
    sigma: np.ndarray
    sigma_err: np.ndarray
    delta_market: float
    mu: float
    n_missing: int = 0
    n_nonpositive: int = 0

    def points(self, post_offset: bool = True, drop_nonpositive: bool = False):
        """Valid cells as surface points (post- or pre-offset vols)."""
        vols = self.sigma if post_offset else self.sigma_raw
        out = []
        for i, m in enumerate(self.maturities):
            for j, k in enumerate(self.strikes):
                v = vols[i, j]
                if math.isnan(v) or (drop_nonpositive and v <= 0.0):
                    continue
                out.append(ImpliedVolSurfacePoint(float(m), float(k), float(v)))
        return out

    def to_vol_surface(self, label: str, as_of: str | None = None) -> VolSurface:
        return VolSurface(
            label=label,
            as_of=as_of,
            spot=1.0,
            points=self.points(post_offset=True, drop_nonpositive=True),
        )


def classify_strike_profile(vols) -> str:
    """Shape of one maturity slice from the sign pattern of discrete slopes.

    "skew" = strictly decreasing everywhere; "smile" = decreasing then
    increasing (one sign change, so an interior minimum); anything else is
    "other".
    """
    v = np.asarray(vols, dtype=float)
    if len(v) < 3 or np.any(np.isnan(v)):
        return "other"
    slopes = np.diff(v)
    if np.all(slopes < 0.0):
        return "skew"
    if np.all(slopes > 0.0):
        return "other"
    sign_change = np.flatnonzero(np.diff(np.sign(slopes)) != 0)
    if len(sign_change) == 1 and slopes[0] < 0.0 and slopes[-1] > 0.0:
        return "smile"
    return "other"


def surface_from_payoffs(
    grid: "PayoffGrid", mu: float, delta_market: float = 0.0
) -> SurfaceInversion:
    """Invert every payoff-grid cell to implied vol and apply the offset.

    Cells whose Monte Carlo price falls outside the arbitrage band (or whose
    inversion fails) are marked missing (NaN) and counted, never fabricated.
    Inversion uses each maturity's effective grid time so the discretized
    horizon and the Black-Scholes clock agree.
    """
    n_m, n_k = grid.mean.shape
    sigma_raw = np.full((n_m, n_k), np.nan)
    sigma_err = np.full((n_m, n_k), np.nan)
    n_missing = 0
    for i in range(n_m):
        t_eff = float(grid.eff_maturities[i])
        for j in range(n_k):
            try:
                sig = implied_vol(
                    float(grid.mean[i, j]), 1.0, float(grid.strikes[j]), mu, t_eff
                )
            except (OutOfBandError, NoConvergenceError):
                n_missing += 1
                continue
            sigma_raw[i, j] = sig
            v = vega(BsInputs(1.0, float(grid.strikes[j]), mu, sig, t_eff))
            sigma_err[i, j] = grid.std_err[i, j] / v if v > 1e-12 else np.inf
    sigma = sigma_raw - delta_market
    n_nonpositive = int(np.sum(sigma[~np.isnan(sigma)] <= 0.0))
    return SurfaceInversion(
        maturities=np.asarray(grid.maturities, dtype=float),
        eff_maturities=np.asarray(grid.eff_maturities, dtype=float),
        strikes=np.asarray(grid.strikes, dtype=float),
        sigma_raw=sigma_raw,
        sigma=sigma,
        sigma_err=sigma_err,
        delta_market=delta_market,
        mu=mu,
        n_missing=n_missing,
        n_nonpositive=n_nonpositive,
    )
