"""The calibratable model parameter set shared by the engine and calibrator."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .dynamics import DRIFT_PRESERVE_HERDING, DynamicsConfig


@dataclass(frozen=True)
class ModelParams:
    """Nine calibratable parameters plus simulation controls.

    sigma_alpha, k_asym: vote volatilities (sigma_beta = sigma_alpha * k_asym)
    i_low, i_up:         reflecting herding limits (-1/+1 = no limit)
    mu:                  prime rate, used only in the implied-vol inversion
    alpha0, beta0:       initial community point
    b_par:               vote-to-price coefficient
    delta_market:        constant vol offset (used directly in "fitted" mode;
                         recomputed per evaluation in "computed" mode)
    """

    sigma_alpha: float
    k_asym: float = 1.0
    i_low: float = -1.0
    i_up: float = 1.0
    mu: float = 0.0
    alpha0: float = 0.5
    beta0: float = 0.5
    b_par: float = 1.0
    delta_market: float = 0.0
    # simulation controls, not calibratable
    gamma_star: float = 0.5
    drift_mode: str = DRIFT_PRESERVE_HERDING

    CALIBRATABLE = (
        "sigma_alpha",
        "k_asym",
        "i_low",
        "i_up",
        "mu",
        "alpha0",
        "beta0",
        "b_par",
        "delta_market",
    )

    def violations(self) -> dict[str, float]:
        """Constraint violations (name -> magnitude); empty when feasible."""
        out: dict[str, float] = {}
        if self.sigma_alpha <= 0.0:
            out["sigma_alpha"] = -self.sigma_alpha + 1e-9
        if self.k_asym <= 0.0:
            out["k_asym"] = -self.k_asym + 1e-9
        if self.b_par <= 0.0:
            out["b_par"] = -self.b_par + 1e-9
        if self.i_low < -1.0:
            out["i_low"] = -1.0 - self.i_low
        if self.i_up > 1.0:
            out["i_up"] = self.i_up - 1.0
        if self.i_low >= self.i_up:
            out["i_strip"] = self.i_low - self.i_up + 1e-9
        for name in ("alpha0", "beta0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out[name] = max(-v, v - 1.0)
        d0 = self.beta0 - self.alpha0
        if d0 < self.i_low:
            out["start_below_strip"] = self.i_low - d0
        elif d0 > self.i_up:
            out["start_above_strip"] = d0 - self.i_up
        return out

    def to_dynamics_config(self, dt: float) -> DynamicsConfig:
        return DynamicsConfig(
            sigma_alpha=self.sigma_alpha,
            k_asym=self.k_asym,
            i_low=self.i_low,
            i_up=self.i_up,
            dt=dt,
            gamma_star=self.gamma_star,
            drift_mode=self.drift_mode,
        )

    def replace(self, **kw) -> "ModelParams":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelParams":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in names})
