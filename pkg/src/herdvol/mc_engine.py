"""Parallel Monte Carlo over community-plus-price paths.

Each path carries its own counter-based RNG stream keyed by
(base_seed, path_index), so the payoff grid is bitwise identical no matter
how many workers run or how blocks are scheduled.  Paths are stepped in
vectorized blocks; per-block partial sums are merged in block order.

Prices come from the integrated vote-to-price map
S(t) = (odds(gamma_t) / odds(gamma_0))^B with odds(g) = g / (1 - g); at the
volatilities the fitted presets live at, the per-step moves are large
enough that this and the first-order incremental update differ materially,
and only the integrated map reproduces the skew/smile shapes the model is
known for.  The incremental update stays available in the pricemap module,
which also quantifies the small-step agreement of the two maps.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import _repair_raw, gamma_arrays, step_arrays
from .errors import ConfigError
from .params import ModelParams

_UINT64_MASK = 2**64 - 1


@dataclass(frozen=True)
class SimulationSpec:
    """Everything one pricing run needs.

    Strikes are ratios to spot (S(0) = 1); maturities in years.  n_paths of
    at least ~10^3 are needed for production-quality grids; tests may use
    fewer.
    """

    model: ModelParams
    maturities: tuple[float, ...] = (1.0 / 12.0, 3.0 / 12.0, 6.0 / 12.0, 1.0)
    strikes: tuple[float, ...] = tuple(0.8 + 0.05 * i for i in range(9))
    n_paths: int = 200_000
    dt: float = 1.0 / 250.0
    base_seed: int = 0
    n_jobs: int = 1
    block_size: int = 8192

    def validate(self) -> None:
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be positive, got {self.n_paths}")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.maturities or any(m <= 0.0 for m in self.maturities):
            raise ConfigError("maturities must be positive")
        if any(b <= a for a, b in zip(self.maturities, self.maturities[1:])):
            raise ConfigError("maturities must be strictly increasing")
        if not self.strikes or any(k < 0.0 for k in self.strikes):
            raise ConfigError("strikes must be non-negative")
        if any(b <= a for a, b in zip(self.strikes, self.strikes[1:])):
            raise ConfigError("strikes must be strictly increasing")
        if self.n_jobs < 1 or self.block_size < 1:
            raise ConfigError("n_jobs and block_size must be positive")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        # constructing the config surfaces strip/volatility errors early
        self.model.to_dynamics_config(self.dt)

    def maturity_steps(self) -> list[int]:
        """Grid step index for each maturity (nearest step, at least 1)."""
        return [max(1, round(m / self.dt)) for m in self.maturities]


@dataclass
class PayoffGrid:
    """Monte Carlo call-price estimates over the (maturity, strike) grid."""

    maturities: np.ndarray
    eff_maturities: np.ndarray  # maturities snapped to the step grid
    strikes: np.ndarray
    mean: np.ndarray
    std_err: np.ndarray
    n_paths: int
    base_seed: int
    floor_events: int
    total_steps: int
    dt: float

    @property
    def floor_fraction(self) -> float:
        return self.floor_events / self.total_steps if self.total_steps else 0.0

    def to_json_dict(self, meta: dict | None = None) -> dict:
        doc = {
            "maturities": [float(m) for m in self.maturities],
            "eff_maturities": [float(m) for m in self.eff_maturities],
            "strikes": [float(k) for k in self.strikes],
            "mean": self.mean.tolist(),
            "stderr": self.std_err.tolist(),
            "n_paths": self.n_paths,
            "seed": self.base_seed,
            "floor_events": self.floor_events,
            "total_steps": self.total_steps,
            "dt": self.dt,
        }
        if meta is not None:
            doc["meta"] = meta
        return doc

    def save(self, path, meta: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(meta), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PayoffGrid":
        return cls(
            maturities=np.asarray(doc["maturities"], dtype=float),
            eff_maturities=np.asarray(doc["eff_maturities"], dtype=float),
            strikes=np.asarray(doc["strikes"], dtype=float),
            mean=np.asarray(doc["mean"], dtype=float),
            std_err=np.asarray(doc["stderr"], dtype=float),
            n_paths=int(doc["n_paths"]),
            base_seed=int(doc["seed"]),
            floor_events=int(doc["floor_events"]),
            total_steps=int(doc["total_steps"]),
            dt=float(doc["dt"]),
        )

    @classmethod
    def load(cls, path) -> "PayoffGrid":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _block_noise(base_seed: int, lo: int, hi: int, n_steps: int) -> np.ndarray:
    """Per-path noise, stream keyed by (base_seed, path index); (n_steps, 2, P)."""
    n_paths = hi - lo
    noise = np.empty((n_paths, n_steps, 2))
    key_hi = base_seed & _UINT64_MASK
    for p in range(n_paths):
        gen = np.random.Generator(np.random.Philox(key=[key_hi, lo + p]))
        noise[p] = gen.standard_normal((n_steps, 2))
    return np.ascontiguousarray(noise.transpose(1, 2, 0))


def _simulate_block(args) -> tuple[np.ndarray, np.ndarray, int, np.ndarray | None]:
    (model, dt, base_seed, lo, hi, n_steps, m_steps, strikes, collect_row) = args
    cfg = model.to_dynamics_config(dt)
    strikes = np.asarray(strikes, dtype=float)
    n_m, n_k = len(m_steps), len(strikes)
    row_at: dict[int, list[int]] = {}
    for row, step_idx in enumerate(m_steps):
        row_at.setdefault(step_idx, []).append(row)

    z = _block_noise(base_seed, lo, hi, n_steps)
    n_block = hi - lo
    a0, b0 = _repair_raw(model.alpha0, model.beta0, cfg.i_low, cfg.i_up)
    a = np.full(n_block, a0)
    b = np.full(n_block, b0)
    g = gamma_arrays(a, b)
    logit0 = np.log(g / (1.0 - g))
    b_par = model.b_par

    sums = np.zeros((n_m, n_k))
    sumsq = np.zeros((n_m, n_k))
    samples = None
    for t in range(n_steps):
        a, b = step_arrays(a, b, cfg, z[t, 0], z[t, 1])
        rows = row_at.get(t + 1)
        if not rows:
            continue
        g = gamma_arrays(a, b)
        s = np.exp((np.log(g / (1.0 - g)) - logit0) * b_par)
        for row in rows:
            for j in range(n_k):
                pay = np.maximum(s - strikes[j], 0.0)
                sums[row, j] += pay.sum()
                sumsq[row, j] += pay @ pay
            if collect_row == row:
                samples = s.copy()
    return sums, sumsq, 0, samples


def _run_blocks(spec: SimulationSpec, collect_row: int | None):
    spec.validate()
    m_steps = spec.maturity_steps()
    n_steps = max(m_steps)
    blocks = [
        (lo, min(lo + spec.block_size, spec.n_paths))
        for lo in range(0, spec.n_paths, spec.block_size)
    ]
    tasks = [
        (spec.model, spec.dt, spec.base_seed, lo, hi, n_steps, tuple(m_steps),
         tuple(spec.strikes), collect_row)
        for lo, hi in blocks
    ]
    if spec.n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.n_jobs) as pool:
            results = list(pool.map(_simulate_block, tasks))
    else:
        results = [_simulate_block(t) for t in tasks]

    n_m, n_k = len(spec.maturities), len(spec.strikes)
    sums = np.zeros((n_m, n_k))
    sumsq = np.zeros((n_m, n_k))
    floor_events = 0
    sample_parts = []
    for block_sums, block_sumsq, block_floor, block_samples in results:
        sums += block_sums
        sumsq += block_sumsq
        floor_events += block_floor
        if block_samples is not None:
            sample_parts.append(block_samples)
    samples = np.concatenate(sample_parts) if sample_parts else None
    return sums, sumsq, floor_events, n_steps, m_steps, samples


def run_paths(spec: SimulationSpec) -> PayoffGrid:
    """Monte Carlo call-price grid: mean payoff and standard error per cell.

    Deterministic for a fixed base_seed regardless of n_jobs or scheduling.
    """
    sums, sumsq, floor_events, n_steps, m_steps, _ = _run_blocks(spec, None)
    n = spec.n_paths
    mean = sums / n
    if n > 1:
        var = np.maximum(sumsq - n * mean * mean, 0.0) / (n - 1)
        std_err = np.sqrt(var / n)
    else:
        std_err = np.full_like(mean, np.inf)
    return PayoffGrid(
        maturities=np.asarray(spec.maturities, dtype=float),
        eff_maturities=np.asarray([idx * spec.dt for idx in m_steps]),
        strikes=np.asarray(spec.strikes, dtype=float),
        mean=mean,
        std_err=std_err,
        n_paths=n,
        base_seed=spec.base_seed,
        floor_events=floor_events,
        total_steps=n * n_steps,
        dt=spec.dt,
    )


def terminal_prices(spec: SimulationSpec, maturity: float) -> np.ndarray:
    """Terminal stock prices of every path at one of the spec's maturities."""
    try:
        row = list(spec.maturities).index(maturity)
    except ValueError:
        raise ConfigError(f"maturity {maturity} not in spec.maturities {spec.maturities}")
    _, _, _, _, _, samples = _run_blocks(spec, row)
    return samples


def price_distribution(
    spec: SimulationSpec, maturity: float, n_bins: int
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized histogram (sums to 1) of terminal prices at a maturity.

    Returns (weights, bin_edges); used for fat-tail diagnostics.
    """
    if n_bins < 1:
        raise ConfigError(f"n_bins must be positive, got {n_bins}")
    samples = terminal_prices(spec, maturity)
    counts, edges = np.histogram(samples, bins=n_bins)
    return counts / len(samples), edges
