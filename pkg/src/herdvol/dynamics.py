"""Stochastic evolution of the community point (alpha, beta).

Euler steps of a drift-diffusion process whose drift pulls the point toward
a neutral-community target with the same herding value, plus reflecting
boundaries on the herding coordinate d = beta - alpha.  In logit
coordinates each of alpha and beta performs a near-Brownian walk, which is
what makes the vote-to-price map produce Black-Scholes prices when the
herding strip collapses onto the diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .population import GAMMA_EPS, PopulationState

# Box clamp for the (alpha, beta) coordinates; exits beyond this are pure
# Euler-discretization error since the continuous process cannot leave (0, 1).
P_EPS = 1e-6

DRIFT_PRESERVE_HERDING = "preserve-herding"
DRIFT_CENTER = "center"


@dataclass(frozen=True)
class DynamicsConfig:
    """Parameters of the community diffusion.

    sigma_alpha and sigma_beta = sigma_alpha * k_asym are the volatility-like
    rates of the two conditional-probability coordinates; (i_low, i_up) is
    the reflecting herding strip, with -1/+1 meaning no limit.
    """

    sigma_alpha: float
    k_asym: float = 1.0
    i_low: float = -1.0
    i_up: float = 1.0
    dt: float = 1.0 / 250.0
    gamma_star: float = 0.5
    drift_mode: str = DRIFT_PRESERVE_HERDING

    def __post_init__(self):
        if self.sigma_alpha < 0.0 or self.k_asym < 0.0:
            raise ConfigError("sigma_alpha and k_asym must be non-negative")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (-1.0 <= self.i_low <= self.i_up <= 1.0):
            raise ConfigError(
                f"need -1 <= i_low <= i_up <= 1, got ({self.i_low}, {self.i_up})"
            )
        if not (0.0 < self.gamma_star < 1.0):
            raise ConfigError(f"gamma_star must lie in (0, 1), got {self.gamma_star}")
        if self.drift_mode not in (DRIFT_PRESERVE_HERDING, DRIFT_CENTER):
            raise ConfigError(f"unknown drift_mode {self.drift_mode!r}")

    @property
    def sigma_beta(self) -> float:
        return self.sigma_alpha * self.k_asym


@dataclass
class CommunityPath:
    """Simulated trajectory of the community point and its bull ratio."""

    times: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    gammas: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def state(self, idx: int) -> PopulationState:
        return PopulationState(float(self.alphas[idx]), float(self.betas[idx]))

    @property
    def herdings(self) -> np.ndarray:
        return self.betas - self.alphas

    def to_csv(self, path, header_comment: str | None = None) -> None:
        """Dump t, alpha, beta, gamma columns for plotting/debugging."""
        with open(path, "w", encoding="utf-8") as fh:
            if header_comment:
                for line in header_comment.splitlines():
                    fh.write(f"# {line}\n")
            fh.write("t,alpha,beta,gamma\n")
            for t, a, b, g in zip(self.times, self.alphas, self.betas, self.gammas):
                fh.write(f"{t:.9g},{a:.9g},{b:.9g},{g:.9g}\n")


def drift_targets(
    state: PopulationState, gamma_star: float = 0.5, drift_mode: str = DRIFT_PRESERVE_HERDING
) -> tuple[float, float]:
    """Equilibrium point (alpha*, beta*) the drift pulls toward.

    The default target is the community with the same herding I but a
    neutral bull ratio gamma*: beta* = 1 - gamma_star * (1 - I) and
    alpha* = beta* - I, which at gamma* = 1/2 reduces to
    beta* = 1/2 + I/2, alpha* = 1/2 - I/2.  The "center" mode pins both
    targets at 1/2 instead.
    """
    if drift_mode == DRIFT_CENTER:
        return 0.5, 0.5
    i_h = state.beta - state.alpha
    b_star = 1.0 - gamma_star * (1.0 - i_h)
    a_star = b_star - i_h
    # Only reachable for biased gamma_star far from 1/2 with extreme herding.
    b_star = min(max(b_star, 0.0), 1.0)
    a_star = min(max(a_star, 0.0), 1.0)
    return a_star, b_star


def _fold(d: float, i_low: float, i_up: float) -> float:
    """Reflect d into [i_low, i_up] (closed-form repeated reflection)."""
    if i_low <= d <= i_up:
        return d
    width = i_up - i_low
    if width <= 0.0:
        return i_up
    t = (d - i_low) % (2.0 * width)
    return i_low + (width - abs(t - width))


def reflect_and_clamp(state: PopulationState, cfg: DynamicsConfig) -> PopulationState:
    """Repair a raw (alpha, beta) point: reflect the herding coordinate
    d = beta - alpha into the strip while preserving s = alpha + beta, then
    clamp each coordinate into [P_EPS, 1 - P_EPS].  In-bounds points pass
    through unchanged.
    """
    a, b = state.alpha, state.beta
    d = b - a
    if not (cfg.i_low <= d <= cfg.i_up):
        s = a + b
        d = _fold(d, cfg.i_low, cfg.i_up)
        a = 0.5 * (s - d)
        b = 0.5 * (s + d)
    a = min(max(a, P_EPS), 1.0 - P_EPS)
    b = min(max(b, P_EPS), 1.0 - P_EPS)
    return PopulationState(a, b)


def _repair_raw(a: float, b: float, i_low: float, i_up: float) -> tuple[float, float]:
    # Same repair as reflect_and_clamp but on raw floats that may sit outside
    # the unit square (PopulationState would reject those before repair).
    d = b - a
    if not (i_low <= d <= i_up):
        s = a + b
        d = _fold(d, i_low, i_up)
        a = 0.5 * (s - d)
        b = 0.5 * (s + d)
    a = min(max(a, P_EPS), 1.0 - P_EPS)
    b = min(max(b, P_EPS), 1.0 - P_EPS)
    return a, b


def step(
    state: PopulationState, cfg: DynamicsConfig, noise: tuple[float, float]
) -> PopulationState:
    """One Euler step of the community point.

    alpha_next = alpha - (alpha - alpha*) alpha (1-alpha) dt sigma_a^2
                 + alpha (1-alpha) sqrt(dt) sigma_a phi_1
    and the analogous update for beta with sigma_b = sigma_a * k_asym; the
    raw result is repaired by reflect_and_clamp.
    """
    z1, z2 = noise
    a, b = state.alpha, state.beta
    a_star, b_star = drift_targets(state, cfg.gamma_star, cfg.drift_mode)
    sa, sb = cfg.sigma_alpha, cfg.sigma_beta
    dt = cfg.dt
    sqrt_dt = math.sqrt(dt)
    ga = a * (1.0 - a)
    gb = b * (1.0 - b)
    a_raw = a + (a_star - a) * ga * (dt * sa * sa) + ga * (sqrt_dt * sa) * z1
    b_raw = b + (b_star - b) * gb * (dt * sb * sb) + gb * (sqrt_dt * sb) * z2
    a_new, b_new = _repair_raw(a_raw, b_raw, cfg.i_low, cfg.i_up)
    return PopulationState(a_new, b_new)


def _gamma_clamped(a: float, b: float) -> float:
    g = (1.0 - b) / (1.0 + a - b)
    return min(max(g, GAMMA_EPS), 1.0 - GAMMA_EPS)


def n_steps_for(horizon: float, dt: float) -> int:
    """Number of Euler steps covering the horizon (guarding float ratio fuzz)."""
    return max(1, math.ceil(horizon / dt - 1e-9))


def path_rng(seed_or_rng) -> np.random.Generator:
    """Counter-based generator for a standalone path (stream key (seed, 0))."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.Philox(key=[int(seed_or_rng) & (2**64 - 1), 0]))


def simulate_community(
    alpha0: float,
    beta0: float,
    cfg: DynamicsConfig,
    horizon: float,
    rng_seed,
) -> CommunityPath:
    """Euler path of the community point over the horizon (in years).

    The initial point is repaired by one reflect_and_clamp; the path is
    deterministic for a fixed integer seed (a numpy Generator may be passed
    instead to share a stream).
    """
    if horizon <= 0.0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    if not (0.0 <= alpha0 <= 1.0 and 0.0 <= beta0 <= 1.0):
        raise ConfigError(f"initial point ({alpha0}, {beta0}) outside the unit square")
    n = n_steps_for(horizon, cfg.dt)
    rng = path_rng(rng_seed)
    noise = rng.standard_normal((n, 2))

    a, b = _repair_raw(alpha0, beta0, cfg.i_low, cfg.i_up)
    alphas = np.empty(n + 1)
    betas = np.empty(n + 1)
    gammas = np.empty(n + 1)
    alphas[0], betas[0], gammas[0] = a, b, _gamma_clamped(a, b)

    sa, sb = cfg.sigma_alpha, cfg.sigma_beta
    dt = cfg.dt
    sqrt_dt = math.sqrt(dt)
    c_da = dt * sa * sa
    c_na = sqrt_dt * sa
    c_db = dt * sb * sb
    c_nb = sqrt_dt * sb
    i_low, i_up = cfg.i_low, cfg.i_up
    gamma_star = cfg.gamma_star
    center = cfg.drift_mode == DRIFT_CENTER

    for t in range(n):
        if center:
            a_star = 0.5
            b_star = 0.5
        else:
            i_h = b - a
            b_star = 1.0 - gamma_star * (1.0 - i_h)
            a_star = b_star - i_h
            b_star = min(max(b_star, 0.0), 1.0)
            a_star = min(max(a_star, 0.0), 1.0)
        ga = a * (1.0 - a)
        gb = b * (1.0 - b)
        a_raw = a + (a_star - a) * ga * c_da + ga * c_na * noise[t, 0]
        b_raw = b + (b_star - b) * gb * c_db + gb * c_nb * noise[t, 1]
        a, b = _repair_raw(a_raw, b_raw, i_low, i_up)
        alphas[t + 1] = a
        betas[t + 1] = b
        gammas[t + 1] = _gamma_clamped(a, b)

    times = np.arange(n + 1) * dt
    return CommunityPath(times=times, alphas=alphas, betas=betas, gammas=gammas)


# --------------------------------------------------------------------------
# Vectorized stepping over many independent paths (shared with the MC engine)
# --------------------------------------------------------------------------

def step_arrays(
    a: np.ndarray,
    b: np.ndarray,
    cfg: DynamicsConfig,
    z1: np.ndarray,
    z2: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One Euler step applied to arrays of independent community points.

    Arithmetic matches the scalar loop in simulate_community operation for
    operation, so a single path stepped either way is bitwise identical.
    """
    sa, sb = cfg.sigma_alpha, cfg.sigma_beta
    dt = cfg.dt
    sqrt_dt = math.sqrt(dt)
    if cfg.drift_mode == DRIFT_CENTER:
        a_star = 0.5
        b_star = 0.5
    else:
        i_h = b - a
        b_star = 1.0 - cfg.gamma_star * (1.0 - i_h)
        a_star = b_star - i_h
        b_star = np.minimum(np.maximum(b_star, 0.0), 1.0)
        a_star = np.minimum(np.maximum(a_star, 0.0), 1.0)
    ga = a * (1.0 - a)
    gb = b * (1.0 - b)
    a_raw = a + (a_star - a) * ga * (dt * sa * sa) + ga * (sqrt_dt * sa) * z1
    b_raw = b + (b_star - b) * gb * (dt * sb * sb) + gb * (sqrt_dt * sb) * z2

    d = b_raw - a_raw
    out = (d < cfg.i_low) | (d > cfg.i_up)
    if np.any(out):
        s = a_raw + b_raw
        width = cfg.i_up - cfg.i_low
        if width <= 0.0:
            d_f = np.full_like(d, cfg.i_up)
        else:
            t = (d - cfg.i_low) % (2.0 * width)
            d_f = cfg.i_low + (width - np.abs(t - width))
        a_raw = np.where(out, 0.5 * (s - d_f), a_raw)
        b_raw = np.where(out, 0.5 * (s + d_f), b_raw)
    a_new = np.minimum(np.maximum(a_raw, P_EPS), 1.0 - P_EPS)
    b_new = np.minimum(np.maximum(b_raw, P_EPS), 1.0 - P_EPS)
    return a_new, b_new


def gamma_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Clamped mean-field bull ratio for arrays of community points."""
    g = (1.0 - b) / (1.0 + a - b)
    return np.minimum(np.maximum(g, GAMMA_EPS), 1.0 - GAMMA_EPS)


def sample_logit_increments(
    cfg: DynamicsConfig,
    alpha0: float,
    beta0: float,
    n_paths: int,
    n_steps: int,
    base_seed: int,
) -> np.ndarray:
    """Pool per-step increments of log(gamma/(1-gamma)) over an ensemble.

    Used for diagnosing the Black-Scholes diagonal limit, where the pooled
    increments should be Gaussian.
    """
    a0, b0 = _repair_raw(alpha0, beta0, cfg.i_low, cfg.i_up)
    a = np.full(n_paths, a0)
    b = np.full(n_paths, b0)
    rng = np.random.Generator(np.random.Philox(key=[int(base_seed) & (2**64 - 1), 0]))
    g = gamma_arrays(a, b)
    logit = np.log(g / (1.0 - g))
    out = np.empty((n_steps, n_paths))
    for t in range(n_steps):
        z = rng.standard_normal((2, n_paths))
        a, b = step_arrays(a, b, cfg, z[0], z[1])
        g = gamma_arrays(a, b)
        new_logit = np.log(g / (1.0 - g))
        out[t] = new_logit - logit
        logit = new_logit
    return out.ravel()
