"""Fit the model to a market implied-volatility surface.

Derivative-free simplex (Nelder-Mead) descents with multi-start, a
vol-space RMSE objective evaluated by the Monte Carlo engine under common
random numbers (a fixed engine seed per descent makes the objective
deterministic, which classic Nelder-Mead needs), and constraint handling by
additive penalty.  The market offset delta_market is by default not a
simplex coordinate: it is recomputed inside every objective evaluation as
the least-squares optimal constant, mean(sigma_model - sigma_market).
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bs
from .errors import ConfigError, NoImprovementError, UnknownPresetError
from .mc_engine import SimulationSpec, run_paths
from .params import ModelParams
from .surface_io import VolSurface

DELTA_COMPUTED = "computed"
DELTA_FITTED = "fitted"

# Parameters jittered additively by +-0.1 (clipped); the rest get +-20%.
_ADDITIVE_JITTER = ("alpha0", "beta0", "i_low", "i_up")

PENALTY_BASE = 10.0
MISSING_CELL_PENALTY = 0.5  # vol units per unit missing-cell fraction


@dataclass(frozen=True)
class McSettings:
    """Engine controls used inside the objective."""

    n_paths: int = 20_000
    dt: float = 1.0 / 250.0
    n_jobs: int = 1
    block_size: int = 8192


@dataclass(frozen=True)
class SimplexControls:
    """Classic Nelder-Mead coefficients and stopping rules."""

    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5
    max_iter: int = 120
    f_tol: float = 1e-4
    x_tol: float = 1e-3
    steps: dict = field(default_factory=dict)  # per-parameter initial step overrides

    def initial_step(self, name: str, value: float) -> float:
        if name in self.steps:
            return float(self.steps[name])
        if name in _ADDITIVE_JITTER:
            return 0.05
        return max(0.2 * abs(value), 0.02)


@dataclass
class CalibrationSpec:
    """Everything one calibration run needs.

    base carries the fixed values and the initial guess for the free
    parameters; free names all else fixed.
    """

    target: VolSurface
    free_params: tuple[str, ...]
    base: ModelParams
    n_starts: int = 8
    per_maturity: bool = False
    delta_mode: str = DELTA_COMPUTED
    mc: McSettings = field(default_factory=McSettings)
    simplex: SimplexControls = field(default_factory=SimplexControls)

    def validate(self) -> None:
        if not self.free_params:
            raise ConfigError("free_params must not be empty")
        for name in self.free_params:
            if name not in ModelParams.CALIBRATABLE:
                raise ConfigError(f"unknown free parameter {name!r}")
        if self.delta_mode not in (DELTA_COMPUTED, DELTA_FITTED):
            raise ConfigError(f"delta_mode must be computed or fitted, got {self.delta_mode!r}")
        if self.delta_mode == DELTA_COMPUTED and "delta_market" in self.free_params:
            raise ConfigError("delta_market cannot be a simplex parameter in computed mode")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be positive")
        if not self.target.points:
            raise ConfigError("target surface has no points")


@dataclass
class ObjectiveValue:
    """Loss plus the diagnostics behind it."""

    loss: float
    rmse: float = math.nan
    delta_market: float = math.nan
    n_missing: int = 0
    n_cells: int = 0
    penalty: float = 0.0


@dataclass
class DescentTrace:
    """One Nelder-Mead run: where it started, where it ended, how it moved."""

    start: dict
    final: dict
    final_loss: float
    delta_market: float
    trace: list
    mc_seed: int
    n_evals: int
    improved: bool


@dataclass
class CalibrationResult:
    """Aggregate of the multi-start runs for one target (or one slice)."""

    free_params: tuple
    param_mean: dict
    param_std: dict
    best_params: ModelParams
    best_loss: float
    best_delta_market: float
    runs: list  # DescentTrace per start
    rng_seed: int

    def to_json_dict(self) -> dict:
        return {
            "free_params": list(self.free_params),
            "param_mean": self.param_mean,
            "param_std": self.param_std,
            "best_params": self.best_params.as_dict(),
            "best_loss": self.best_loss,
            "best_delta_market": self.best_delta_market,
            "rng_seed": self.rng_seed,
            "runs": [
                {
                    "start": r.start,
                    "final": r.final,
                    "final_loss": r.final_loss,
                    "delta_market": r.delta_market,
                    "mc_seed": r.mc_seed,
                    "n_evals": r.n_evals,
                    "improved": r.improved,
                    "trace": r.trace,
                }
                for r in self.runs
            ],
        }

    def table(self) -> str:
        """Human-readable mean +- std block, one parameter per line."""
        lines = [f"{'Parameter':<14}{'Optimized value':<24}"]
        lines.append("-" * 38)
        for name in self.free_params:
            lines.append(
                f"{name:<14}{self.param_mean[name]:>10.4g} +- {self.param_std[name]:<10.3g}"
            )
        if "delta_market" in self.param_mean and "delta_market" not in self.free_params:
            lines.append(
                f"{'delta_market':<14}{self.param_mean['delta_market']:>10.4g} +- "
                f"{self.param_std['delta_market']:<10.3g}"
            )
        lines.append(f"{'best loss':<14}{self.best_loss:>10.4g}")
        return "\n".join(lines)


def _target_grid(target: VolSurface):
    mats, ks, vol = target.grid()
    return mats, ks, vol


def objective(
    params: ModelParams,
    target: VolSurface,
    mc: McSettings,
    base_seed: int,
    delta_mode: str = DELTA_COMPUTED,
) -> ObjectiveValue:
    """Vol-space RMSE of the model surface against the target.

    Infeasible parameter vectors are folded into a dominating additive
    penalty without running the engine; target cells whose model price
    cannot be inverted count as missing at MISSING_CELL_PENALTY per unit
    fraction.
    """
    violations = params.violations()
    if violations:
        total = sum(violations.values())
        return ObjectiveValue(loss=PENALTY_BASE + total, penalty=PENALTY_BASE + total)

    mats, ks, target_vol = _target_grid(target)
    spec = SimulationSpec(
        model=params,
        maturities=tuple(float(m) for m in mats),
        strikes=tuple(float(k) for k in ks),
        n_paths=mc.n_paths,
        dt=mc.dt,
        base_seed=base_seed,
        n_jobs=mc.n_jobs,
        block_size=mc.block_size,
    )
    grid = run_paths(spec)
    inv = bs.surface_from_payoffs(grid, mu=params.mu, delta_market=0.0)

    wanted = ~np.isnan(target_vol)
    have = wanted & ~np.isnan(inv.sigma_raw)
    n_cells = int(wanted.sum())
    n_valid = int(have.sum())
    n_missing = n_cells - n_valid
    missing_frac = n_missing / n_cells if n_cells else 1.0

    if n_valid == 0:
        return ObjectiveValue(
            loss=MISSING_CELL_PENALTY,
            rmse=math.nan,
            delta_market=math.nan,
            n_missing=n_missing,
            n_cells=n_cells,
        )
    resid = inv.sigma_raw[have] - target_vol[have]
    if delta_mode == DELTA_COMPUTED:
        delta = float(np.mean(resid))
    else:
        delta = params.delta_market
    rmse = float(np.sqrt(np.mean((resid - delta) ** 2)))
    return ObjectiveValue(
        loss=rmse + MISSING_CELL_PENALTY * missing_frac,
        rmse=rmse,
        delta_market=delta,
        n_missing=n_missing,
        n_cells=n_cells,
    )


def nelder_mead(f, x0: np.ndarray, steps: np.ndarray, ctrl: SimplexControls):
    """Classic Nelder-Mead on a deterministic objective.

    Returns (x_best, f_best, trace, n_evals, improved); trace holds the
    best-vertex loss per iteration (non-increasing by construction).
    """
    n = len(x0)
    simplex = [np.asarray(x0, dtype=float)]
    for i in range(n):
        v = np.array(x0, dtype=float)
        v[i] += steps[i]
        simplex.append(v)
    fvals = [f(v) for v in simplex]
    n_evals = n + 1
    f_start = fvals[0]
    trace = []

    for _ in range(ctrl.max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        trace.append(fvals[0])
        if max(fvals) - fvals[0] < ctrl.f_tol:
            break
        spread = max(np.max(np.abs(v - simplex[0])) for v in simplex[1:])
        if spread < ctrl.x_tol:
            break

        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + ctrl.reflect * (centroid - worst)
        fr = f(xr)
        n_evals += 1
        if fr < fvals[0]:
            xe = centroid + ctrl.expand * (centroid - worst)
            fe = f(xe)
            n_evals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + ctrl.contract * (xr - centroid)
            else:
                xc = centroid + ctrl.contract * (worst - centroid)
            fc = f(xc)
            n_evals += 1
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                best = simplex[0]
                for i in range(1, n + 1):
                    simplex[i] = best + ctrl.shrink * (simplex[i] - best)
                    fvals[i] = f(simplex[i])
                n_evals += n

    order = np.argsort(fvals, kind="stable")
    x_best = simplex[order[0]]
    f_best = fvals[order[0]]
    trace.append(f_best)
    improved = f_best < f_start - 1e-12
    return x_best, f_best, trace, n_evals, improved


def _vector_to_params(base: ModelParams, names, x) -> ModelParams:
    return base.replace(**{name: float(v) for name, v in zip(names, x)})


def _jitter_start(base: ModelParams, names, rng: np.random.Generator) -> ModelParams:
    kw = {}
    for name in names:
        v = getattr(base, name)
        if name in _ADDITIVE_JITTER:
            kw[name] = v + rng.uniform(-0.1, 0.1)
        else:
            kw[name] = v * rng.uniform(0.8, 1.2)
    out = base.replace(**kw)
    # keep the jittered start feasible: ordered strip, start point inside it
    i_low, i_up = out.i_low, out.i_up
    if i_low > i_up:
        i_low, i_up = i_up, i_low
    i_low = min(max(i_low, -1.0), 1.0)
    i_up = min(max(i_up, i_low + 1e-3), 1.0)
    a0 = min(max(out.alpha0, 0.0), 1.0)
    b0 = min(max(out.beta0, a0 + i_low), a0 + i_up)
    b0 = min(max(b0, 0.0), 1.0)
    return out.replace(i_low=i_low, i_up=i_up, alpha0=a0, beta0=b0)


def _descent_seeds(rng_seed: int, n_starts: int) -> list[int]:
    ss = np.random.SeedSequence(rng_seed)
    return [int(s) for s in ss.generate_state(n_starts, dtype=np.uint64)]


def calibrate(spec: CalibrationSpec, rng_seed: int) -> CalibrationResult:
    """Multi-start Nelder-Mead fit of the free parameters to the target.

    Each descent owns a fixed engine seed (common random numbers), so its
    objective is deterministic; seeds differ across descents, so the
    reported per-parameter standard deviation includes Monte Carlo noise.
    Raises NoImprovementError when every descent dies on its initial
    simplex.
    """
    spec.validate()
    names = spec.free_params
    rng = np.random.default_rng(rng_seed)
    mc_seeds = _descent_seeds(rng_seed, spec.n_starts)

    runs: list[DescentTrace] = []
    for d in range(spec.n_starts):
        start = spec.base if d == 0 else _jitter_start(spec.base, names, rng)
        x0 = np.array([getattr(start, n) for n in names], dtype=float)
        steps = np.array([spec.simplex.initial_step(n, x0[i]) for i, n in enumerate(names)])
        mc_seed = mc_seeds[d]

        cache: dict[tuple, ObjectiveValue] = {}

        def fun(x, _seed=mc_seed, _start=start):
            key = tuple(np.round(x, 12))
            if key not in cache:
                p = _vector_to_params(_start, names, x)
                cache[key] = objective(p, spec.target, spec.mc, _seed, spec.delta_mode)
            return cache[key].loss

        x_best, f_best, trace, n_evals, improved = nelder_mead(fun, x0, steps, spec.simplex)
        detail = cache[tuple(np.round(x_best, 12))]
        final_params = _vector_to_params(start, names, x_best)
        runs.append(
            DescentTrace(
                start={n: float(getattr(start, n)) for n in names},
                final={n: float(getattr(final_params, n)) for n in names},
                final_loss=float(f_best),
                delta_market=float(detail.delta_market),
                trace=[float(v) for v in trace],
                mc_seed=mc_seed,
                n_evals=n_evals,
                improved=improved,
            )
        )

    if not any(r.improved for r in runs):
        raise NoImprovementError(
            "every descent terminated at its initial simplex; the spec is degenerate"
        )

    finals = {n: np.array([r.final[n] for r in runs]) for n in names}
    param_mean = {n: float(v.mean()) for n, v in finals.items()}
    param_std = {n: float(v.std(ddof=1)) if len(v) > 1 else 0.0 for n, v in finals.items()}
    deltas = np.array([r.delta_market for r in runs])
    if np.all(np.isfinite(deltas)):
        param_mean["delta_market"] = float(deltas.mean())
        param_std["delta_market"] = float(deltas.std(ddof=1)) if len(deltas) > 1 else 0.0

    best = min(runs, key=lambda r: r.final_loss)
    best_params = spec.base.replace(**best.final)
    if spec.delta_mode == DELTA_COMPUTED and math.isfinite(best.delta_market):
        best_params = best_params.replace(delta_market=best.delta_market)
    return CalibrationResult(
        free_params=tuple(names),
        param_mean=param_mean,
        param_std=param_std,
        best_params=best_params,
        best_loss=min(r.final_loss for r in runs),
        best_delta_market=best.delta_market,
        runs=runs,
        rng_seed=rng_seed,
    )


def calibrate_per_maturity(spec: CalibrationSpec, rng_seed: int):
    """Refit all free parameters separately for each maturity slice."""
    out = []
    for k, m in enumerate(spec.target.maturities()):
        slice_spec = dataclasses.replace(
            spec, target=spec.target.restricted_to_maturity(m), per_maturity=False
        )
        out.append((m, calibrate(slice_spec, rng_seed + k)))
    return out


# --------------------------------------------------------------------------
# Presets: fitted parameter sets from published calibrations
# --------------------------------------------------------------------------

def preset_library() -> dict[str, ModelParams]:
    """Named parameter sets: published per-surface fits plus the
    Black-Scholes-limit configuration used by the flat-surface checks."""
    lib = {
        # near-diagonal strip; mu is the model's own implied prime
        # (half the squared effective price volatility)
        "bs-limit": ModelParams(
            sigma_alpha=0.7, k_asym=1.0, i_low=-0.01, i_up=0.01,
            mu=0.1225, alpha0=0.5, beta0=0.5, b_par=1.0, delta_market=0.0,
        ),
        "spx-2001-full": ModelParams(
            sigma_alpha=1.37, k_asym=0.74, i_low=-0.03, i_up=0.24,
            mu=0.069, alpha0=0.50, beta0=0.51, b_par=1.09, delta_market=0.99,
        ),
        "spx-2001-reduced": ModelParams(
            sigma_alpha=1.38, k_asym=0.74, i_low=-0.05, i_up=0.23,
            mu=0.045, alpha0=0.5, beta0=0.5, b_par=1.0, delta_market=0.88,
        ),
        "vod-2001-1m": ModelParams(
            sigma_alpha=1.74, k_asym=0.64, i_low=-1.0, i_up=1.0,
            mu=0.045, alpha0=0.79, beta0=0.35, b_par=1.00, delta_market=0.17,
        ),
        "vod-2001-3m": ModelParams(
            sigma_alpha=1.90, k_asym=0.83, i_low=-1.0, i_up=1.0,
            mu=0.045, alpha0=0.74, beta0=0.38, b_par=1.06, delta_market=0.44,
        ),
        "vod-2001-6m": ModelParams(
            sigma_alpha=1.31, k_asym=0.85, i_low=-1.0, i_up=1.0,
            mu=0.045, alpha0=0.74, beta0=0.43, b_par=1.05, delta_market=0.21,
        ),
        "vod-2001-12m": ModelParams(
            sigma_alpha=1.01, k_asym=0.91, i_low=-1.0, i_up=1.0,
            mu=0.045, alpha0=0.72, beta0=0.62, b_par=1.13, delta_market=0.29,
        ),
        "vod-2001-6m-herding": ModelParams(
            sigma_alpha=1.28, k_asym=0.91, i_low=-0.11, i_up=0.29,
            mu=0.045, alpha0=0.5, beta0=0.5, b_par=1.0, delta_market=7.6e-3,
        ),
        "vod-2001-12m-herding": ModelParams(
            sigma_alpha=1.33, k_asym=1.07, i_low=-0.11, i_up=0.21,
            mu=0.045, alpha0=0.5, beta0=0.5, b_par=1.0, delta_market=2.3e-3,
        ),
        "spx-2005-1d": ModelParams(
            sigma_alpha=24.0, k_asym=0.97, i_low=-1.0, i_up=1.0,
            mu=0.065, alpha0=0.87, beta0=0.19, b_par=0.005, delta_market=-0.007,
        ),
        "spx-2005-1m": ModelParams(
            sigma_alpha=5.6, k_asym=0.62, i_low=-1.0, i_up=1.0,
            mu=0.065, alpha0=0.94, beta0=0.16, b_par=0.79, delta_market=0.40,
        ),
        "spx-2005-3m": ModelParams(
            sigma_alpha=1.54, k_asym=0.61, i_low=-0.20, i_up=0.47,
            mu=0.065, alpha0=0.48, beta0=0.43, b_par=1.19, delta_market=1.30,
        ),
        "spx-2005-6m": ModelParams(
            sigma_alpha=1.46, k_asym=0.80, i_low=-0.15, i_up=0.39,
            mu=0.065, alpha0=0.47, beta0=0.46, b_par=1.11, delta_market=1.33,
        ),
        "spx-2005-15m": ModelParams(
            sigma_alpha=1.45, k_asym=0.87, i_low=-0.11, i_up=0.28,
            mu=0.065, alpha0=0.48, beta0=0.51, b_par=1.09, delta_market=1.33,
        ),
    }
    return lib


def get_preset(name: str) -> ModelParams:
    lib = preset_library()
    if name not in lib:
        raise UnknownPresetError(
            f"unknown preset {name!r}; available: {', '.join(sorted(lib))}"
        )
    return lib[name]


# Calibration protocols: which parameters move, everything else pinned.
PROTOCOLS = {
    # all nine except the offset, which is computed per evaluation
    "spx-full": {
        "free": ("i_up", "i_low", "sigma_alpha", "k_asym", "mu", "alpha0", "beta0", "b_par"),
        "base": "spx-2001-full",
        "per_maturity": False,
    },
    "spx-reduced": {
        "free": ("i_up", "i_low", "sigma_alpha", "k_asym"),
        "base": "spx-2001-reduced",
        "per_maturity": False,
    },
    # no herding limits; every maturity fitted separately
    "vod": {
        "free": ("sigma_alpha", "k_asym", "alpha0", "beta0", "b_par"),
        "base": "vod-2001-1m",
        "per_maturity": True,
    },
}
