"""Data model and persistence for implied-volatility surfaces.

Surfaces are stored either as CSV (columns maturity_years,
strike_over_spot, implied_vol; extra columns and '#' comment lines are
ignored) or as JSON {label, as_of, spot, points}.  Maturities are always in
years: 1 month := 1/12 year, 1 trading day := 1/250 year.  Numbers are
written with 9 significant digits in a stable order so diffs stay
meaningful.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

CSV_COLUMNS = ("maturity_years", "strike_over_spot", "implied_vol")


@dataclass(frozen=True)
class ImpliedVolSurfacePoint:
    """One (maturity, strike/spot) cell of an implied-volatility surface."""

    maturity: float
    strike_over_spot: float
    sigma_imp: float


@dataclass
class VolSurface:
    """Implied-volatility surface with its spot reference.

    Strikes are ratios to spot, so the spot value is metadata only; pricing
    always normalizes to spot = 1.
    """

    label: str = ""
    as_of: str | None = None
    spot: float = 1.0
    points: list[ImpliedVolSurfacePoint] = field(default_factory=list)

    def validate(self) -> None:
        """Raise ValidationError on invariant violations (listing offenders)."""
        bad = []
        seen = {}
        for k, p in enumerate(self.points):
            reasons = []
            if not math.isfinite(p.maturity) or p.maturity <= 0.0:
                reasons.append("non-positive maturity")
            if not math.isfinite(p.strike_over_spot) or p.strike_over_spot <= 0.0:
                reasons.append("non-positive strike")
            if not math.isfinite(p.sigma_imp) or p.sigma_imp <= 0.0:
                reasons.append("non-positive implied vol")
            key = (p.maturity, p.strike_over_spot)
            if key in seen:
                reasons.append(f"duplicate of point {seen[key]}")
            else:
                seen[key] = k
            if reasons:
                bad.append(f"point {k} {key}: " + "; ".join(reasons))
        if self.spot <= 0.0 or not math.isfinite(self.spot):
            bad.append(f"spot must be positive, got {self.spot}")
        if bad:
            raise ValidationError("invalid surface: " + " | ".join(bad))

    def sorted_points(self) -> list[ImpliedVolSurfacePoint]:
        return sorted(self.points, key=lambda p: (p.maturity, p.strike_over_spot))

    def maturities(self) -> list[float]:
        return sorted({p.maturity for p in self.points})

    def strikes(self) -> list[float]:
        return sorted({p.strike_over_spot for p in self.points})

    def grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense (maturities, strikes, vol) arrays; missing cells are NaN."""
        mats = self.maturities()
        ks = self.strikes()
        vol = np.full((len(mats), len(ks)), np.nan)
        m_idx = {m: i for i, m in enumerate(mats)}
        k_idx = {k: j for j, k in enumerate(ks)}
        for p in self.points:
            vol[m_idx[p.maturity], k_idx[p.strike_over_spot]] = p.sigma_imp
        return np.asarray(mats), np.asarray(ks), vol

    def restricted_to_maturity(self, maturity: float) -> "VolSurface":
        pts = [p for p in self.points if p.maturity == maturity]
        return VolSurface(label=self.label, as_of=self.as_of, spot=self.spot, points=pts)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _parse_float(raw: str, line_no: int, col: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: field {col!r}: cannot parse {raw!r}") from exc


def _read_csv(path: Path) -> VolSurface:
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        plain = (line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        reader = csv.reader(plain)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        try:
            cols = {name: header.index(name) for name in CSV_COLUMNS}
        except ValueError as exc:
            raise ParseError(f"{path}: header must contain {CSV_COLUMNS}, got {header}") from exc
        for line_no, row in enumerate(reader, start=2):
            if len(row) < len(header):
                raise ParseError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            points.append(
                ImpliedVolSurfacePoint(
                    maturity=_parse_float(row[cols["maturity_years"]], line_no, "maturity_years"),
                    strike_over_spot=_parse_float(
                        row[cols["strike_over_spot"]], line_no, "strike_over_spot"
                    ),
                    sigma_imp=_parse_float(row[cols["implied_vol"]], line_no, "implied_vol"),
                )
            )
    return VolSurface(label=path.stem, as_of=None, spot=1.0, points=points)


def _read_json(path: Path) -> VolSurface:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict) or "points" not in raw:
        raise ParseError(f"{path}: expected an object with a 'points' array")
    points = []
    for k, item in enumerate(raw["points"]):
        try:
            points.append(
                ImpliedVolSurfacePoint(
                    maturity=float(item["maturity_years"]),
                    strike_over_spot=float(item["strike_over_spot"]),
                    sigma_imp=float(item["implied_vol"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: point {k}: {exc!r}") from exc
    return VolSurface(
        label=str(raw.get("label", path.stem)),
        as_of=raw.get("as_of"),
        spot=float(raw.get("spot", 1.0)),
        points=points,
    )


def read_surface(path) -> VolSurface:
    """Read and validate a surface from CSV or JSON (by extension)."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    if path.suffix.lower() == ".json":
        surface = _read_json(path)
    else:
        surface = _read_csv(path)
    surface.validate()
    return surface


def surface_json_dict(surface: VolSurface, meta: dict | None = None) -> dict:
    """JSON-ready dict with stable field order and 9-significant-digit floats."""
    doc: dict = {
        "label": surface.label,
        "as_of": surface.as_of,
        "spot": float(_fmt(surface.spot)),
        "points": [
            {
                "maturity_years": float(_fmt(p.maturity)),
                "strike_over_spot": float(_fmt(p.strike_over_spot)),
                "implied_vol": float(_fmt(p.sigma_imp)),
            }
            for p in surface.sorted_points()
        ],
    }
    if meta is not None:
        doc["meta"] = meta
    return doc


def write_surface(surface: VolSurface, path, fmt: str | None = None, meta: dict | None = None) -> None:
    """Write a surface as CSV or JSON (fmt inferred from the extension).

    Points are sorted by (maturity, strike) and numbers printed with 9
    significant digits, so writing the same surface twice produces
    byte-identical files.
    """
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    surface.validate()
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(surface_json_dict(surface, meta), fh, indent=2)
            fh.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            if meta is not None:
                fh.write(f"# meta: {json.dumps(meta, sort_keys=True)}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for p in surface.sorted_points():
                fh.write(f"{_fmt(p.maturity)},{_fmt(p.strike_over_spot)},{_fmt(p.sigma_imp)}\n")


def schema_path() -> Path:
    """Location of the bundled JSON schema for surface files."""
    return Path(__file__).parent / "schemas" / "vol_surface.schema.json"
