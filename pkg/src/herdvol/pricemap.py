"""Deterministic market function mapping the voting outcome to prices.

The unique map that turns the bull-ratio diffusion into Black-Scholes-type
log-price dynamics is F(gamma) = B * log(gamma / (1 - gamma)).  Prices are
advanced by the first-order update S <- S * (1 + B * d log-odds); the
closed-form integral S = (gamma / (1 - gamma))^B is kept only as a test
oracle for the cumulative update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# Prices are floored here if a large negative log-odds increment would push
# the first-order update through zero; such events must be statistically
# negligible and are counted by the MC engine.
S_FLOOR = 1e-12


@dataclass(frozen=True)
class PriceState:
    """Stock price plus the vote-to-price coefficient B."""

    s: float
    b_par: float

    def __post_init__(self):
        if self.s <= 0.0:
            raise DomainError(f"price must be positive, got {self.s}")
        if self.b_par <= 0.0:
            raise DomainError(f"b_par must be positive, got {self.b_par}")


def log_odds(gamma: float) -> float:
    """log(gamma / (1 - gamma)); domain (0, 1)."""
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"bull ratio must lie strictly in (0, 1), got {gamma}")
    return math.log(gamma / (1.0 - gamma))


def market_function(gamma: float, b: float) -> float:
    """F(gamma) = B log(gamma / (1 - gamma)), the vote-to-log-price map."""
    return b * log_odds(gamma)


def price_update(price: PriceState, gamma_prev: float, gamma_next: float) -> PriceState:
    """Advance the stock price by one voting step.

    S_next = S + S * [log-odds(gamma_next) - log-odds(gamma_prev)] * B,
    floored at S_FLOOR.
    """
    s_next = price.s + price.s * (log_odds(gamma_next) - log_odds(gamma_prev)) * price.b_par
    return PriceState(s=max(s_next, S_FLOOR), b_par=price.b_par)


def integrated_price(gamma: float, b: float) -> float:
    """Closed-form price S = (gamma / (1 - gamma))^B.

    Test oracle only: the simulation path always uses the incremental
    price_update.
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"bull ratio must lie strictly in (0, 1), got {gamma}")
    return (gamma / (1.0 - gamma)) ** b
