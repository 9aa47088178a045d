"""Command-line front end: simulate, surface, calibrate, diagnose, presets.

Every output file embeds the fully resolved configuration and seeds (no
timestamps), so re-running a command with the same inputs reproduces the
file byte for byte.  Exit codes: 0 success, 2 configuration/validation
error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import bs
from .calibration import (
    DELTA_COMPUTED,
    DELTA_FITTED,
    CalibrationSpec,
    McSettings,
    PROTOCOLS,
    SimplexControls,
    calibrate,
    calibrate_per_maturity,
    get_preset,
    preset_library,
)
from .dynamics import simulate_community
from .errors import ConfigError, HerdvolError, ParseError, UnknownPresetError, ValidationError
from .mc_engine import PayoffGrid, SimulationSpec, run_paths
from .params import ModelParams
from .population import (
    PopulationState,
    herding,
    mean_field_gamma,
    mutual_information,
    social_responsivity,
)
from .errors import DivergentError, SingularPointError
from .surface_io import read_surface, write_surface

CONFIG_EXIT = 2
RUNTIME_EXIT = 3

DEFAULT_MATURITIES = "1/12,3/12,6/12,1"
DEFAULT_STRIKES = "0.8:1.2:0.05"


def _parse_number(token: str) -> float:
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def _parse_maturities(text: str) -> tuple[float, ...]:
    return tuple(_parse_number(t) for t in text.split(",") if t.strip())


def _parse_strikes(text: str) -> tuple[float, ...]:
    if ":" in text:
        lo, hi, step = (_parse_number(t) for t in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return tuple(round(lo + i * step, 12) for i in range(n))
    return tuple(_parse_number(t) for t in text.split(",") if t.strip())


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return raw


def _resolve(args: argparse.Namespace, file_cfg: dict, keys: list[str]) -> dict:
    """Merge precedence: explicit CLI flag > config file > parser default."""
    out = {}
    for key in keys:
        cli_val = getattr(args, key, None)
        if key in args.__dict__ and args.__dict__.get(f"_{key}_given", False):
            out[key] = cli_val
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = cli_val
    return out


class _TrackingParser(argparse.ArgumentParser):
    """Records which options were given explicitly (to merge with --config)."""

    def parse_args(self, argv=None, namespace=None):  # type: ignore[override]
        ns = super().parse_args(argv, namespace)
        given = set()
        tokens = argv if argv is not None else sys.argv[1:]
        for tok in tokens:
            if tok.startswith("--"):
                given.add(tok.lstrip("-").split("=")[0].replace("-", "_"))
        for key in list(vars(ns)):
            ns.__dict__[f"_{key}_given"] = key in given
        return ns


def _model_from_cfg(cfg: dict) -> ModelParams:
    if cfg.get("params"):
        return ModelParams.from_dict(cfg["params"])
    return get_preset(cfg.get("preset") or "spx-2001-full")


def _sim_spec(cfg: dict, model: ModelParams) -> SimulationSpec:
    return SimulationSpec(
        model=model,
        maturities=_parse_maturities(cfg["maturities"]) if isinstance(cfg["maturities"], str)
        else tuple(cfg["maturities"]),
        strikes=_parse_strikes(cfg["strikes"]) if isinstance(cfg["strikes"], str)
        else tuple(cfg["strikes"]),
        n_paths=int(cfg["paths"]),
        dt=float(cfg["dt"]),
        base_seed=int(cfg["seed"]),
        n_jobs=int(cfg["threads"]),
    )


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(command: str, cfg: dict) -> dict:
    clean = {k: v for k, v in cfg.items() if v is not None}
    return {"command": command, "config": clean}


def cmd_simulate(args, file_cfg) -> int:
    keys = ["preset", "params", "maturities", "strikes", "paths", "dt", "seed",
            "threads", "out", "dump_path", "horizon"]
    cfg = _resolve(args, file_cfg, keys)
    model = _model_from_cfg(cfg)
    cfg["params"] = model.as_dict()
    spec = _sim_spec(cfg, model)
    grid = run_paths(spec)
    out = _out_dir(cfg)
    grid_path = out / "payoff_grid.json"
    grid.save(grid_path, meta=_meta("simulate", cfg))
    print(f"wrote {grid_path} ({len(spec.maturities)} maturities x {len(spec.strikes)} strikes, "
          f"{spec.n_paths} paths, floor events {grid.floor_events})")
    if cfg.get("dump_path"):
        horizon = _parse_number(str(cfg.get("horizon") or max(spec.maturities)))
        path = simulate_community(model.alpha0, model.beta0,
                                  model.to_dynamics_config(spec.dt), horizon, spec.base_seed)
        dump = out / str(cfg["dump_path"])
        path.to_csv(dump, header_comment=json.dumps(_meta("simulate", cfg)))
        print(f"wrote {dump} ({len(path)} states)")
    return 0


def cmd_surface(args, file_cfg) -> int:
    keys = ["preset", "params", "maturities", "strikes", "paths", "dt", "seed",
            "threads", "out", "grid", "label"]
    cfg = _resolve(args, file_cfg, keys)
    if cfg.get("grid"):
        grid = PayoffGrid.load(cfg["grid"])
        model = _model_from_cfg(cfg)
        cfg["params"] = model.as_dict()
    else:
        model = _model_from_cfg(cfg)
        cfg["params"] = model.as_dict()
        grid = run_paths(_sim_spec(cfg, model))
    inv = bs.surface_from_payoffs(grid, mu=model.mu, delta_market=model.delta_market)
    out = _out_dir(cfg)
    label = cfg.get("label") or (cfg.get("preset") or "model")
    surface = inv.to_vol_surface(label)
    meta = _meta("surface", cfg)
    meta["n_missing"] = inv.n_missing
    meta["n_nonpositive_after_offset"] = inv.n_nonpositive
    surf_path = out / "surface.json"
    write_surface(surface, surf_path, fmt="json", meta=meta)
    plot_path = out / "plot_data.csv"
    with open(plot_path, "w", encoding="utf-8") as fh:
        fh.write(f"# meta: {json.dumps(meta, sort_keys=True)}\n")
        fh.write("maturity_years,strike_over_spot,sigma_imp,sigma_players,sigma_err\n")
        for i, m in enumerate(inv.maturities):
            for j, k in enumerate(inv.strikes):
                if np.isnan(inv.sigma_raw[i, j]):
                    continue
                fh.write(f"{m:.9g},{k:.9g},{inv.sigma[i, j]:.9g},"
                         f"{inv.sigma_raw[i, j]:.9g},{inv.sigma_err[i, j]:.9g}\n")
    print(f"wrote {surf_path} and {plot_path} (missing cells: {inv.n_missing})")
    return 0


def cmd_calibrate(args, file_cfg) -> int:
    keys = ["target", "protocol", "free", "preset", "starts", "per_maturity", "paths",
            "dt", "seed", "threads", "out", "max_iter", "delta_mode"]
    cfg = _resolve(args, file_cfg, keys)
    if not cfg.get("target"):
        raise ConfigError("calibrate requires --target FILE")
    target = read_surface(cfg["target"])

    if cfg.get("protocol"):
        name = cfg["protocol"]
        if name not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {name!r}; available: {', '.join(PROTOCOLS)}")
        proto = PROTOCOLS[name]
        free = proto["free"]
        base = get_preset(cfg.get("preset") or proto["base"])
        per_maturity = bool(cfg.get("per_maturity") or proto["per_maturity"])
    else:
        if not cfg.get("free"):
            raise ConfigError("calibrate requires --protocol or --free")
        free = tuple(t.strip() for t in cfg["free"].split(",") if t.strip())
        base = _model_from_cfg(cfg)
        per_maturity = bool(cfg.get("per_maturity"))
    cfg["free_resolved"] = list(free)
    cfg["base_params"] = base.as_dict()

    spec = CalibrationSpec(
        target=target,
        free_params=tuple(free),
        base=base,
        n_starts=int(cfg["starts"]),
        per_maturity=per_maturity,
        delta_mode=cfg.get("delta_mode") or DELTA_COMPUTED,
        mc=McSettings(n_paths=int(cfg["paths"]), dt=float(cfg["dt"]),
                      n_jobs=int(cfg["threads"])),
        simplex=SimplexControls(max_iter=int(cfg["max_iter"])),
    )
    seed = int(cfg["seed"])
    out = _out_dir(cfg)
    meta = _meta("calibrate", cfg)

    if per_maturity:
        slices = calibrate_per_maturity(spec, seed)
        doc = {"meta": meta, "mode": "per-maturity",
               "slices": [{"maturity": m, "result": r.to_json_dict()} for m, r in slices]}
        tables = []
        for m, r in slices:
            tables.append(f"== maturity {m:.6g} years ==\n{r.table()}")
        table_text = "\n\n".join(tables)
    else:
        result = calibrate(spec, seed)
        doc = {"meta": meta, "mode": "whole-surface", "result": result.to_json_dict()}
        table_text = result.table()

    json_path = out / "calibration.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    table_path = out / "calibration_table.txt"
    table_path.write_text(table_text + "\n", encoding="utf-8")
    print(f"wrote {json_path} and {table_path}")
    print(table_text)
    return 0


def cmd_diagnose(args, file_cfg) -> int:
    keys = ["alpha", "beta", "grid_step", "out"]
    cfg = _resolve(args, file_cfg, keys)
    out = _out_dir(cfg)

    def row(a: float, b: float) -> dict:
        state = PopulationState(a, b)
        rec: dict = {"alpha": a, "beta": b, "herding": herding(state)}
        try:
            rec["gamma"] = mean_field_gamma(state)
            rec["mutual_information"] = mutual_information(state)
        except SingularPointError:
            rec["gamma"] = None
            rec["mutual_information"] = None
            rec["singular"] = True
        try:
            rec["responsivity"] = social_responsivity(state)
        except DivergentError:
            rec["responsivity"] = None
            rec["divergent"] = True
        return rec

    if cfg.get("grid_step"):
        h = float(cfg["grid_step"])
        n = int(round(1.0 / h))
        values = [round(i * h, 12) for i in range(n + 1)]
        path = out / "diagnose.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# meta: {json.dumps(_meta('diagnose', cfg), sort_keys=True)}\n")
            fh.write("alpha,beta,gamma,herding,responsivity,mutual_information,flag\n")
            for a in values:
                for b in values:
                    r = row(a, b)
                    flag = "singular" if r.get("singular") else (
                        "divergent" if r.get("divergent") else "")
                    fmt = lambda v: "" if v is None else f"{v:.9g}"
                    fh.write(f"{a:.9g},{b:.9g},{fmt(r['gamma'])},{r['herding']:.9g},"
                             f"{fmt(r['responsivity'])},{fmt(r['mutual_information'])},{flag}\n")
        print(f"wrote {path} ({(n + 1) ** 2} rows)")
        return 0

    if cfg.get("alpha") is None or cfg.get("beta") is None:
        raise ConfigError("diagnose requires --alpha and --beta, or --grid-step")
    r = row(float(cfg["alpha"]), float(cfg["beta"]))
    for key, value in r.items():
        print(f"{key}: {value}")
    return 0


def cmd_presets(args, file_cfg) -> int:
    lib = preset_library()
    if args.name:
        params = get_preset(args.name)
        print(json.dumps({args.name: params.as_dict()}, indent=2))
    else:
        for name in sorted(lib):
            p = lib[name]
            print(f"{name:<22} sigma_alpha={p.sigma_alpha:<6g} k_asym={p.k_asym:<6g} "
                  f"I=[{p.i_low:g}, {p.i_up:g}] start=({p.alpha0:g}, {p.beta0:g}) "
                  f"B={p.b_par:g} mu={p.mu:g} delta={p.delta_market:g}")
    return 0


def build_parser() -> _TrackingParser:
    parser = _TrackingParser(prog="herdvol",
                             description="Opinion-dynamics market model: simulate, price, "
                                         "invert, calibrate")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; explicit flags override it")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=".", help="output directory")

    sim = sub.add_parser("simulate", help="run Monte Carlo paths, write the payoff grid")
    common(sim)
    sim.add_argument("--preset", help="named parameter preset")
    sim.add_argument("--maturities", default=DEFAULT_MATURITIES,
                     help="comma list in years (fractions like 1/12 allowed)")
    sim.add_argument("--strikes", default=DEFAULT_STRIKES, help="lo:hi:step or comma list")
    sim.add_argument("--paths", type=int, default=200_000)
    sim.add_argument("--dt", type=float, default=1.0 / 250.0)
    sim.add_argument("--dump-path", dest="dump_path",
                     help="also write one community path CSV with this name")
    sim.add_argument("--horizon", help="horizon (years) for the path dump")

    surf = sub.add_parser("surface", help="invert a payoff grid to an implied-vol surface")
    common(surf)
    surf.add_argument("--preset")
    surf.add_argument("--grid", help="existing payoff grid JSON (otherwise simulate inline)")
    surf.add_argument("--maturities", default=DEFAULT_MATURITIES)
    surf.add_argument("--strikes", default=DEFAULT_STRIKES)
    surf.add_argument("--paths", type=int, default=200_000)
    surf.add_argument("--dt", type=float, default=1.0 / 250.0)
    surf.add_argument("--label")

    cal = sub.add_parser("calibrate", help="fit model parameters to a target surface")
    common(cal)
    cal.add_argument("--target", help="target surface file (CSV or JSON)")
    cal.add_argument("--protocol", help=f"one of: {', '.join(PROTOCOLS)}")
    cal.add_argument("--free", help="comma list of free parameter names")
    cal.add_argument("--preset", help="base preset for fixed values / initial guess")
    cal.add_argument("--starts", type=int, default=8)
    cal.add_argument("--per-maturity", dest="per_maturity", action="store_true")
    cal.add_argument("--paths", type=int, default=20_000)
    cal.add_argument("--dt", type=float, default=1.0 / 250.0)
    cal.add_argument("--max-iter", dest="max_iter", type=int, default=120)
    cal.add_argument("--delta-mode", dest="delta_mode",
                     choices=[DELTA_COMPUTED, DELTA_FITTED])

    diag = sub.add_parser("diagnose", help="population mathematics at a point or grid")
    common(diag)
    diag.add_argument("--alpha", type=float)
    diag.add_argument("--beta", type=float)
    diag.add_argument("--grid-step", dest="grid_step", type=float,
                      help="emit a CSV over the whole unit square at this spacing")

    pre = sub.add_parser("presets", help="list or show named parameter presets")
    common(pre)
    pre.add_argument("name", nargs="?", help="preset to dump as JSON")

    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "surface": cmd_surface,
    "calibrate": cmd_calibrate,
    "diagnose": cmd_diagnose,
    "presets": cmd_presets,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else CONFIG_EXIT
    try:
        file_cfg = _load_config(getattr(args, "config", None))
        return COMMANDS[args.command](args, file_cfg)
    except (ConfigError, ParseError, ValidationError, UnknownPresetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    except HerdvolError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected error: {exc!r}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
