"""Black-Scholes machinery against quadrature and finite-difference oracles."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from herdvol.bs import (
    BsInputs,
    apply_market_offset,
    call_payoff,
    call_price_closed,
    call_price_integral,
    classify_strike_profile,
    implied_vol,
    lognormal_density,
    surface_from_payoffs,
    vega,
)
from herdvol.errors import DomainError, NoConvergenceError, OutOfBandError
from herdvol.mc_engine import SimulationSpec, run_paths
from herdvol.params import ModelParams


def test_payoff_trivials():
    assert call_payoff(1.2, 1.0) == pytest.approx(0.2)
    assert call_payoff(0.8, 1.0) == 0.0


def test_lognormal_density_normalization():
    inputs = BsInputs(1.0, 1.0, 0.045, 0.2, 1.0)
    total, err = quad(lambda s: lognormal_density(s, inputs), 0.0, np.inf, limit=200)
    assert abs(total - 1.0) < 1e-8


def test_lognormal_density_log_mode():
    inputs = BsInputs(1.0, 1.0, 0.05, 0.3, 0.7)
    mode_log = math.log(inputs.spot) + (inputs.mu - 0.5 * inputs.sigma**2) * inputs.maturity
    # density of log S peaks at the Gaussian mean: s * pdf(s) maximal there
    grid = np.linspace(mode_log - 0.5, mode_log + 0.5, 2001)
    values = np.exp(grid) * lognormal_density(np.exp(grid), inputs)
    assert abs(grid[np.argmax(values)] - mode_log) < 1e-3


def test_lognormal_density_concentrates_at_forward():
    inputs = BsInputs(1.0, 1.0, 0.1, 0.005, 1.0)
    f = inputs.forward
    mass, _ = quad(lambda s: lognormal_density(s, inputs), f * 0.98, f * 1.02)
    assert mass > 0.999


def test_call_price_closed_trivials():
    assert call_price_closed(BsInputs(1.0, 1.0, 0.0, 0.0, 1.0)) == 0.0
    # zero strike: the call is the forward
    assert call_price_closed(BsInputs(1.0, 1e-12, 0.05, 0.3, 2.0)) == pytest.approx(
        math.exp(0.1), abs=1e-9
    )


def test_call_price_closed_reference_value():
    c = call_price_closed(BsInputs(1.0, 1.0, 0.0, 0.2, 1.0))
    assert c == pytest.approx(0.0796557, abs=1e-6)
    assert c == pytest.approx(call_price_integral(BsInputs(1.0, 1.0, 0.0, 0.2, 1.0)), abs=1e-6)


def test_closed_matches_integral_grid():
    for sigma in (0.05, 0.2, 0.5, 1.0, 2.0):
        for t in (0.02, 0.1, 0.25, 0.5, 1.25):
            inputs = BsInputs(1.0, 1.0, 0.03, sigma, t)
            assert call_price_closed(inputs) == pytest.approx(
                call_price_integral(inputs, abs_tol=1e-8), abs=1e-6
            )


def test_integral_sigma_zero_limit():
    assert call_price_integral(BsInputs(1.0, 0.9, 0.05, 0.0, 1.0)) == pytest.approx(
        math.exp(0.05) - 0.9, abs=1e-12
    )


def test_integral_tolerance_validation():
    with pytest.raises(DomainError):
        call_price_integral(BsInputs(1.0, 1.0, 0.0, 0.2, 1.0), abs_tol=1e-12)


def test_call_price_monotone_in_sigma_convex_in_strike():
    sigmas = np.linspace(0.05, 2.0, 30)
    prices = [call_price_closed(BsInputs(1.0, 1.0, 0.02, s, 0.5)) for s in sigmas]
    assert np.all(np.diff(prices) > 0)
    strikes = np.linspace(0.5, 1.5, 41)
    pk = np.array([call_price_closed(BsInputs(1.0, k, 0.02, 0.4, 0.5)) for k in strikes])
    assert np.all(np.diff(pk) < 0)
    assert np.all(np.diff(pk, 2) > -1e-12)


def test_vega_matches_finite_differences():
    h = 1e-5
    for sigma in (0.05, 0.2, 0.7, 1.4, 2.0):
        for t in (0.02, 0.25, 1.25):
            for k in (0.8, 1.0, 1.2):
                up = call_price_closed(BsInputs(1.0, k, 0.03, sigma + h, t))
                dn = call_price_closed(BsInputs(1.0, k, 0.03, sigma - h, t))
                fd = (up - dn) / (2 * h)
                v = vega(BsInputs(1.0, k, 0.03, sigma, t))
                assert v == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("sigma", [0.05, 0.2, 0.7, 1.37, 3.0])
def test_implied_vol_round_trip(sigma):
    price = call_price_closed(BsInputs(1.0, 0.95, 0.02, sigma, 0.5))
    assert implied_vol(price, 1.0, 0.95, 0.02, 0.5) == pytest.approx(sigma, abs=1e-6)


def test_implied_vol_round_trip_price_units():
    for sigma in (0.1, 0.5, 1.5):
        inputs = BsInputs(1.0, 1.1, 0.05, sigma, 0.25)
        price = call_price_closed(inputs)
        sig = implied_vol(price, 1.0, 1.1, 0.05, 0.25)
        assert abs(call_price_closed(BsInputs(1.0, 1.1, 0.05, sig, 0.25)) - price) < 1e-8


def test_implied_vol_band_errors():
    f = math.exp(0.02 * 0.5)
    with pytest.raises(OutOfBandError):
        implied_vol(f, 1.0, 0.9, 0.02, 0.5)  # at the band top
    with pytest.raises(OutOfBandError):
        implied_vol(f - 0.9, 1.0, 0.9, 0.02, 0.5)  # at/below intrinsic
    with pytest.raises(OutOfBandError):
        implied_vol(-0.1, 1.0, 0.9, 0.02, 0.5)


def test_implied_vol_blows_up_near_band_top():
    f = math.exp(0.0)
    sig = implied_vol(f - 1e-4, 1.0, 1.0, 0.0, 0.25)
    assert sig > 3.0


def test_implied_vol_above_bracket_raises():
    # a price only representable beyond sigma = 20 on a very short maturity
    f = 1.0
    price_at_cap = call_price_closed(BsInputs(1.0, 1.0, 0.0, 20.0, 0.005))
    with pytest.raises(NoConvergenceError):
        implied_vol(price_at_cap + 0.5 * (f - price_at_cap), 1.0, 1.0, 0.0, 0.005)


def test_apply_market_offset():
    assert apply_market_offset(0.7, 0.0) == 0.7
    assert apply_market_offset(1.5, 0.99) == pytest.approx(0.51)
    assert apply_market_offset(0.5, 0.99) == pytest.approx(-0.49)


def test_classify_strike_profile():
    assert classify_strike_profile([5, 4, 3, 2, 1]) == "skew"
    assert classify_strike_profile([3, 2, 1.5, 1.8, 2.5]) == "smile"
    assert classify_strike_profile([1, 2, 3, 4, 5]) == "other"
    assert classify_strike_profile([1, 2, 1, 2, 1]) == "other"
    assert classify_strike_profile([1, 2]) == "other"


def test_surface_from_frozen_grid_all_out_of_band():
    # frozen community: every cell sits exactly at intrinsic value
    model = ModelParams(sigma_alpha=0.0, alpha0=0.5, beta0=0.5, mu=0.0)
    spec = SimulationSpec(model=model, maturities=(0.25, 1.0), strikes=(0.8, 1.0, 1.2),
                          n_paths=64, base_seed=1)
    grid = run_paths(spec)
    inv = surface_from_payoffs(grid, mu=0.0)
    assert inv.n_missing == 6
    assert np.all(np.isnan(inv.sigma_raw))
    assert inv.points() == []


def test_surface_from_payoffs_applies_offset_and_errors():
    model = ModelParams(sigma_alpha=0.7, k_asym=1.0, i_low=-0.01, i_up=0.01,
                        mu=0.1225, alpha0=0.5, beta0=0.5, b_par=1.0)
    spec = SimulationSpec(model=model, maturities=(0.25,), strikes=(0.9, 1.0, 1.1),
                          n_paths=20_000, base_seed=5)
    grid = run_paths(spec)
    inv = surface_from_payoffs(grid, mu=model.mu, delta_market=0.2)
    assert np.allclose(inv.sigma, inv.sigma_raw - 0.2, equal_nan=True)
    assert np.all(inv.sigma_err[~np.isnan(inv.sigma_err)] > 0)
    surf = inv.to_vol_surface("test")
    assert all(p.sigma_imp > 0 for p in surf.points)


def test_bs_inputs_validation():
    with pytest.raises(DomainError):
        BsInputs(0.0, 1.0, 0.0, 0.2, 1.0)
    with pytest.raises(DomainError):
        BsInputs(1.0, 1.0, 0.0, -0.2, 1.0)
    with pytest.raises(DomainError):
        BsInputs(1.0, 1.0, 0.0, 0.2, 0.0)
    with pytest.raises(DomainError):
        lognormal_density(1.0, BsInputs(1.0, 1.0, 0.0, 0.0, 1.0))
