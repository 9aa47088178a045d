"""Mean-field community mathematics against independent oracles."""
import math

import numpy as np
import pytest

from herdvol.errors import DivergentError, SingularPointError
from herdvol.population import (
    GAMMA_EPS,
    AgentPopulation,
    PopulationState,
    agent_oracle,
    herding,
    injection_response,
    mean_field_gamma,
    mutual_information,
    mutual_information_symmetric,
    social_responsivity,
)


def test_mean_field_gamma_symmetric():
    assert mean_field_gamma(PopulationState(0.5, 0.5)) == pytest.approx(0.5, abs=1e-15)


def test_mean_field_gamma_all_bull_fixed_point():
    # players never turn bear -> everyone ends up bull (clamped at 1 - eps)
    assert mean_field_gamma(PopulationState(0.0, 0.0)) == pytest.approx(1.0, abs=2e-9)


def test_mean_field_gamma_direct_value():
    # (1 - 0.5) / (1 + 0.1 - 0.5) = 0.5 / 0.6
    assert mean_field_gamma(PopulationState(0.1, 0.5)) == pytest.approx(0.5 / 0.6, abs=1e-12)


def test_mean_field_gamma_singular_corner():
    with pytest.raises(SingularPointError):
        mean_field_gamma(PopulationState(0.0, 1.0))


def test_mean_field_fixed_point_identity():
    # gamma solves 1 - g = g*alpha + (1-g)*beta exactly (before clamping)
    for a in np.linspace(0.02, 0.98, 9):
        for b in np.linspace(0.02, 0.98, 9):
            g = (1.0 - b) / (1.0 + a - b)
            assert abs((1.0 - g) - (g * a + (1.0 - g) * b)) < 1e-12


def test_herding_values():
    assert herding(PopulationState(0.5, 0.5)) == 0.0
    assert herding(PopulationState(0.0, 1.0)) == 1.0
    assert herding(PopulationState(0.74, 0.38)) == pytest.approx(-0.36, abs=1e-12)


def test_social_responsivity_values():
    for x in (0.1, 0.5, 0.9):
        assert social_responsivity(PopulationState(x, x)) == 0.0
    # I = 0.5 -> chi = 1; I = -0.5 -> chi = -1/3
    assert social_responsivity(PopulationState(0.25, 0.75)) == pytest.approx(1.0, abs=1e-12)
    assert social_responsivity(PopulationState(0.75, 0.25)) == pytest.approx(-1 / 3, abs=1e-12)


def test_social_responsivity_divergence():
    with pytest.raises(DivergentError):
        social_responsivity(PopulationState(0.0, 1.0))


def test_social_responsivity_monotone_in_herding():
    herds = np.linspace(-0.95, 0.95, 39)
    chis = [i / (1.0 - i) for i in herds]
    values = [
        social_responsivity(PopulationState((1 - i) / 2, (1 + i) / 2)) for i in herds
    ]
    assert np.allclose(values, chis, atol=1e-12)
    assert np.all(np.diff(values) > 0)
    assert np.all(np.sign(values) == np.sign(np.round(herds, 12)))


def test_injection_response_trivials():
    state = PopulationState(0.25, 0.75)
    assert injection_response(0.4, 0.0, 0.9, state) == pytest.approx(0.4, abs=1e-15)
    neutral = PopulationState(0.3, 0.3)
    assert injection_response(0.4, 0.2, 0.9, neutral) == pytest.approx(0.4, abs=1e-15)


def _exact_injection_gamma(state, rho, gamma_rho):
    # steady state of the mean-field balance with an unconditional subgroup:
    # 1 - g = (1-rho)(g a + (1-g) b) + rho (g_r a + (1-g_r) b)
    a, b = state.alpha, state.beta
    i = b - a
    return (1.0 - b + rho * gamma_rho * i) / (1.0 - (1.0 - rho) * i)


def test_injection_response_linear_value_and_exact_crosscheck():
    state = PopulationState(0.25, 0.75)  # gamma = 0.5, I = 0.5, chi = 1
    lin = injection_response(0.5, 0.1, 1.0, state)
    assert lin == pytest.approx(0.55, abs=1e-12)
    exact = _exact_injection_gamma(state, 0.1, 1.0)
    assert exact == pytest.approx(6.0 / 11.0, abs=1e-12)
    assert abs(lin - exact) < 5e-3
    # first-order response: error shrinks quadratically with the injection size
    err_small = abs(injection_response(0.5, 0.001, 1.0, state)
                    - _exact_injection_gamma(state, 0.001, 1.0))
    assert err_small < abs(lin - exact) * 1e-3


def test_mutual_information_diagonal_zero():
    for x in np.linspace(0.05, 0.95, 10):
        assert mutual_information(PopulationState(x, x)) <= 1e-12


def test_mutual_information_symmetric_value():
    # gamma = 0.5 with I = 0.5 is (alpha, beta) = (0.25, 0.75)
    expected = 0.75 * math.log2(1.5) + 0.25 * math.log2(0.5)
    assert expected == pytest.approx(0.188721875540867, abs=1e-12)
    assert mutual_information(PopulationState(0.25, 0.75)) == pytest.approx(expected, abs=1e-10)
    assert mutual_information_symmetric(0.5) == pytest.approx(expected, abs=1e-14)


def test_mutual_information_limit_one_bit():
    assert mutual_information_symmetric(1.0) == pytest.approx(1.0, abs=1e-14)
    assert mutual_information_symmetric(-1.0) == pytest.approx(1.0, abs=1e-14)
    assert mutual_information_symmetric(0.999) > 0.988


def test_mutual_information_closed_form_matches_table():
    # neutral-community closed form vs the joint-probability table
    for i in (-0.9, -0.5, 0.0, 0.5, 0.9):
        state = PopulationState((1 - i) / 2, (1 + i) / 2)
        assert mean_field_gamma(state) == pytest.approx(0.5, abs=1e-12)
        assert mutual_information(state) == pytest.approx(
            mutual_information_symmetric(i), abs=1e-10
        )


def test_mutual_information_relabel_symmetry_and_bounds():
    for a in np.linspace(0.05, 0.95, 7):
        for b in np.linspace(0.05, 0.95, 7):
            e = mutual_information(PopulationState(a, b))
            e_swapped = mutual_information(PopulationState(1.0 - b, 1.0 - a))
            assert e == pytest.approx(e_swapped, abs=1e-12)
            assert 0.0 <= e <= 1.0
            if abs(a - b) >= 0.05:
                assert e > 1e-12


def test_agent_oracle_symmetric():
    pop = AgentPopulation.initialized(10_000, 0.5, 0.5, rng_seed=1)
    g = agent_oracle(pop, 200, rng_seed=2)
    assert abs(g - 0.5) < 0.02


def test_agent_oracle_matches_mean_field():
    reps = []
    for r in range(6):
        pop = AgentPopulation.initialized(10_000, 0.1, 0.5, rng_seed=10 + r)
        reps.append(agent_oracle(pop, 200, rng_seed=100 + r))
    reps = np.array(reps)
    se = reps.std(ddof=1) / math.sqrt(len(reps))
    assert abs(reps.mean() - 0.5 / 0.6) < 4 * se


def test_agent_oracle_absorbing_all_bull():
    pop = AgentPopulation.initialized(10_000, 0.0, 0.0, bull_fraction=0.5, rng_seed=3)
    assert agent_oracle(pop, 200, rng_seed=4) == 1.0
    assert pop.empirical_gamma == 1.0


def test_agent_oracle_deterministic():
    g1 = agent_oracle(AgentPopulation.initialized(500, 0.3, 0.6, rng_seed=5), 150, 6)
    g2 = agent_oracle(AgentPopulation.initialized(500, 0.3, 0.6, rng_seed=5), 150, 6)
    assert g1 == g2


def test_agent_oracle_preconditions():
    with pytest.raises(ValueError):
        agent_oracle(AgentPopulation.initialized(50, 0.3, 0.6), 200, 1)
    with pytest.raises(ValueError):
        agent_oracle(AgentPopulation.initialized(200, 0.3, 0.6), 50, 1)


def test_population_state_validation():
    with pytest.raises(ValueError):
        PopulationState(-0.1, 0.5)
    with pytest.raises(ValueError):
        PopulationState(0.5, 1.2)
    assert PopulationState(0.2, 0.8).herding == pytest.approx(0.6)
