"""Mean-field mathematics of the market-player community.

The community is a point (alpha, beta) in conditional-probability space:
alpha is the probability per contact of turning bear when the partner is a
bull, beta the same when the partner is a bear.  From that point follow the
steady-state bull ratio gamma, the herding parameter I = beta - alpha, the
social responsivity chi_s = I / (1 - I), and the mutual information between
two interacting players.  A brute-force agent simulation is included as an
independent oracle for the mean-field bull ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentError, SingularPointError

# Bull ratio is clamped away from {0, 1} so log(gamma / (1 - gamma)) stays finite.
GAMMA_EPS = 1e-9
# Below this the 1 + alpha - beta denominator counts as singular.
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class PopulationState:
    """Community point in conditional-probability space.

    alpha: P(player turns bear | partner is bull)
    beta:  P(player turns bear | partner is bear)
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError(
                f"(alpha, beta) must lie in the unit square, got ({self.alpha}, {self.beta})"
            )

    @property
    def herding(self) -> float:
        return self.beta - self.alpha


def clamp_gamma(gamma: float) -> float:
    """Clamp a bull ratio to [GAMMA_EPS, 1 - GAMMA_EPS]."""
    return min(max(gamma, GAMMA_EPS), 1.0 - GAMMA_EPS)


def mean_field_gamma(state: PopulationState) -> float:
    """Steady-state fraction of bulls, gamma = (1 - beta) / (1 + alpha - beta).

    Raises SingularPointError at the fully-correlated corner (alpha, beta)
    -> (0, 1) where the ratio is indeterminate (0/0).
    """
    denom = 1.0 + state.alpha - state.beta
    if abs(denom) < SINGULAR_TOL:
        raise SingularPointError(
            f"bull ratio indeterminate at (alpha={state.alpha}, beta={state.beta})"
        )
    return clamp_gamma((1.0 - state.beta) / denom)


def herding(state: PopulationState) -> float:
    """Herding parameter I = beta - alpha in [-1, 1].

    Positive I means players correlate with the crowd, negative means
    contrarian responses.
    """
    return state.beta - state.alpha


def social_responsivity(state: PopulationState) -> float:
    """Responsivity chi_s = I / (1 - I) of the bull ratio to an injected group.

    Vanishes when alpha = beta (random responses) and diverges as I -> 1,
    the phase-transition point where one player's flip can tip the whole
    community; that case raises DivergentError.
    """
    i_herd = herding(state)
    if abs(1.0 - i_herd) < SINGULAR_TOL:
        raise DivergentError(
            f"responsivity diverges at I = 1 (alpha={state.alpha}, beta={state.beta})"
        )
    return i_herd / (1.0 - i_herd)


def injection_response(
    gamma_initial: float, rho: float, gamma_rho: float, state: PopulationState
) -> float:
    """Bull ratio after injecting an unconditional group.

    The group has relative size rho and average state gamma_rho; to first
    order in the perturbation the community moves to
    gamma_initial + chi_s * rho * (gamma_rho - gamma_initial).
    """
    chi = social_responsivity(state)
    return clamp_gamma(gamma_initial + chi * rho * (gamma_rho - gamma_initial))


def _xlog2x(x: float) -> float:
    # 0 * log 0 := 0, the usual information-theoretic limit.
    return 0.0 if x <= 0.0 else x * math.log2(x)


def mutual_information(state: PopulationState) -> float:
    """Mutual information (bits) between the states of two interacting players.

    Built from the joint interaction probabilities at the mean-field bull
    ratio: Omega[bull,bull] = (1-alpha)*gamma, Omega[bear,bear] =
    beta*(1-gamma), Omega[bear,bull] = alpha*gamma, Omega[bull,bear] =
    (1-beta)*(1-gamma), with marginals taken from the table itself.
    Zero-probability cells contribute nothing.
    """
    gamma = mean_field_gamma(state)
    a, b = state.alpha, state.beta
    # joint[i][j]: i = responder state, j = partner state; index 0 = bull, 1 = bear
    joint = (
        ((1.0 - a) * gamma, (1.0 - b) * (1.0 - gamma)),
        (a * gamma, b * (1.0 - gamma)),
    )
    row = (joint[0][0] + joint[0][1], joint[1][0] + joint[1][1])
    col = (joint[0][0] + joint[1][0], joint[0][1] + joint[1][1])
    e_bits = 0.0
    for i in (0, 1):
        for j in (0, 1):
            w = joint[i][j]
            if w > 0.0 and row[i] > 0.0 and col[j] > 0.0:
                e_bits += w * math.log2(w / (row[i] * col[j]))
    # KL divergence is non-negative; guard against -0.0 / rounding dust.
    return max(e_bits, 0.0)


def mutual_information_symmetric(i_herd: float) -> float:
    """Closed-form mutual information (bits) of a neutral (gamma = 1/2) community.

    E = ((1+I)/2) log2(1+I) + ((1-I)/2) log2(1-I); reaches 1 bit in the
    perfectly (anti-)correlated limits I -> +-1.
    """
    if not -1.0 <= i_herd <= 1.0:
        raise ValueError(f"herding must lie in [-1, 1], got {i_herd}")
    return _xlog2x(1.0 + i_herd) / 2.0 + _xlog2x(1.0 - i_herd) / 2.0


# --------------------------------------------------------------------------
# Brute-force agent oracle
# --------------------------------------------------------------------------

@dataclass
class AgentPopulation:
    """Finite community of binary players sharing one (alpha, beta) pair."""

    n_agents: int
    states: np.ndarray  # uint8, 1 = bull, 0 = bear
    alpha: float
    beta: float

    @classmethod
    def initialized(
        cls,
        n_agents: int,
        alpha: float,
        beta: float,
        bull_fraction: float = 0.5,
        rng_seed: int = 0,
    ) -> "AgentPopulation":
        rng = np.random.default_rng(rng_seed)
        states = (rng.random(n_agents) < bull_fraction).astype(np.uint8)
        return cls(n_agents=n_agents, states=states, alpha=alpha, beta=beta)

    @property
    def empirical_gamma(self) -> float:
        return float(self.states.sum()) / self.n_agents


def _oracle_loop(states, idx_i, idx_j, u, alpha, beta, burn_in):
    n = states.shape[0]
    n_int = idx_i.shape[0]
    n_bull = 0
    for k in range(n):
        n_bull += states[k]
    acc = 0.0
    kept = 0
    for t in range(n_int):
        i = idx_i[t]
        j = idx_j[t]
        if j >= i:  # partner drawn uniformly among the other players
            j += 1
        p_bear = alpha if states[j] == 1 else beta
        new_state = 0 if u[t] < p_bear else 1
        n_bull += new_state - states[i]
        states[i] = new_state
        if t >= burn_in:
            acc += n_bull
            kept += 1
    return acc / (kept * n)


try:  # pragma: no cover - exercised implicitly wherever numba is installed
    from numba import njit

    _oracle_loop_fast = njit(cache=True)(_oracle_loop)
except ImportError:  # pragma: no cover
    _oracle_loop_fast = _oracle_loop


def agent_oracle(pop: AgentPopulation, n_sweeps: int, rng_seed: int) -> float:
    """Time-averaged empirical bull ratio from asynchronous agent updates.

    One sweep is n_agents single-agent updates: pick a random agent and a
    random partner, then set the agent to bear with probability alpha (bull
    partner) or beta (bear partner).  The first half of the sweeps is
    burn-in.  Mutates pop.states in place; deterministic for a fixed seed.
    """
    n = pop.n_agents
    if n < 100:
        raise ValueError(f"need at least 100 agents, got {n}")
    if n_sweeps < 100:
        raise ValueError(f"need at least 100 sweeps, got {n_sweeps}")
    if pop.states.shape[0] != n:
        raise ValueError("states length does not match n_agents")
    n_int = n_sweeps * n
    burn_in = n_int // 2
    rng = np.random.default_rng(rng_seed)
    idx_i = rng.integers(0, n, size=n_int, dtype=np.int64)
    idx_j = rng.integers(0, n - 1, size=n_int, dtype=np.int64)
    u = rng.random(n_int)
    states = pop.states.astype(np.int64)
    gamma_bar = _oracle_loop_fast(states, idx_i, idx_j, u, pop.alpha, pop.beta, burn_in)
    pop.states = states.astype(np.uint8)
    return float(gamma_bar)
