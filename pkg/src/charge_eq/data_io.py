"""
Rate-sample ingestion, monotone curve fitting and serialisation.

Sample files are two-column CSV (``soc,power_kw``), optional header, ``#``
comments. Fitted curves are piecewise linear on uniform SoC knots, so the
charging time built from them integrates in closed form.

All numeric output is written with 12 significant digits so repeated runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import isotonic_regression

from .curves import IndifferenceCurve, sample_curve
from .equilibrium import EquilibriumSolution
from .model import (
    ChargingTimeFn,
    ClosedFormChargingTime,
    DomainError,
    ModelParams,
    RateChargingTime,
    RateCurve,
)

DEFAULT_KNOTS = 21
SIG_DIGITS = 12
MASS_FLOOR = 1e-9
SMOOTHING = 1e-12


class SampleFormatError(ValueError):
    """A sample file row could not be parsed."""


class ExportError(OSError):
    """Writing or reading an artifact failed."""


def fmt(x: float) -> str:
    return format(float(x), f".{SIG_DIGITS}g")


def _round(x: float) -> float:
    return float(fmt(x))


@dataclass(frozen=True)
class RateSampleSet:
    vehicle_label: str
    samples: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        samples = tuple((float(s), float(p)) for s, p in self.samples)
        object.__setattr__(self, "samples", samples)
        if len(samples) < 2:
            raise DomainError(f"need at least 2 samples, got {len(samples)}")
        for soc, power in samples:
            if not 0.0 <= soc <= 1.0:
                raise DomainError(f"soc must lie in [0, 1], got {soc}")
            if not power > 0.0:
                raise DomainError(f"power must be positive (> 0), got {power}")

    @property
    def soc(self) -> np.ndarray:
        return np.array([s for s, _ in self.samples])

    @property
    def power(self) -> np.ndarray:
        return np.array([p for _, p in self.samples])


def load_samples(path, label: str = None) -> RateSampleSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from exc
    rows = []
    seen_data = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [c.strip() for c in next(csv.reader([stripped]))]
        if len(fields) != 2:
            raise SampleFormatError(f"{path}:{lineno}: expected 2 columns, got {len(fields)}")
        try:
            soc, power = float(fields[0]), float(fields[1])
        except ValueError:
            if not seen_data and not rows:
                seen_data = True  # header row
                continue
            raise SampleFormatError(f"{path}:{lineno}: non-numeric value in {stripped!r}") from None
        if not (math.isfinite(soc) and math.isfinite(power)):
            raise SampleFormatError(f"{path}:{lineno}: non-finite value in {stripped!r}")
        seen_data = True
        rows.append((soc, power))
    return RateSampleSet(label or path.stem, tuple(rows))


def write_samples(samples: RateSampleSet, path) -> None:
    lines = [f"# {samples.vehicle_label}", "soc,power_kw"]
    lines += [f"{fmt(s)},{fmt(p)}" for s, p in samples.samples]
    _write_text(path, "\n".join(lines) + "\n")


def hat_basis(soc: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation weights of each sample on each knot."""
    n = len(knots)
    idx = np.clip(np.searchsorted(knots, soc, side="right") - 1, 0, n - 2)
    u = (soc - knots[idx]) / (knots[idx + 1] - knots[idx])
    basis = np.zeros((len(soc), n))
    rows = np.arange(len(soc))
    basis[rows, idx] = 1.0 - u
    basis[rows, idx + 1] += u
    return basis


def monotone_projection(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto non-increasing sequences (PAVA)."""
    return isotonic_regression(np.asarray(values, float), weights=weights, increasing=False).x


def fit_rate_curve(samples: RateSampleSet, n_knots: int = DEFAULT_KNOTS,
                   enforce_monotone: bool = True) -> RateCurve:
    """
    Least-squares piecewise-linear fit on uniform knots.

    Knots with no sample in either adjacent segment are excluded from the
    solve and filled by linear interpolation between fitted neighbours. A
    curvature penalty of relative weight 1e-12 resolves any remaining rank
    deficiency without measurably biasing well-determined fits. With
    `enforce_monotone`, fitted knot values are projected onto non-increasing
    sequences, weighted by how much sample mass each knot carries.
    """
    if n_knots < 2:
        raise DomainError(f"n_knots must be >= 2, got {n_knots}")
    knots = np.linspace(0.0, 1.0, n_knots)
    basis = hat_basis(samples.soc, knots)
    mass = basis.sum(axis=0)
    # rounding at knot boundaries can leave ~1e-15 of mass on a neighbour
    supported = mass > MASS_FLOOR * mass.max()
    if not supported.any():
        raise DomainError("no samples fall inside any knot interval")

    # a vanishing curvature penalty picks the linear solution wherever the
    # samples leave the knot values underdetermined
    sub = basis[:, supported]
    m = sub.shape[1]
    if m >= 3:
        diff2 = np.diff(np.eye(m), n=2, axis=0) * math.sqrt(SMOOTHING * len(samples.samples))
        sub = np.vstack([sub, diff2])
    rhs = np.concatenate([samples.power, np.zeros(sub.shape[0] - len(samples.samples))])
    values, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
    if enforce_monotone:
        values = monotone_projection(values, mass[supported])
    power = np.interp(knots, knots[supported], values)
    if np.any(power <= 0):
        raise DomainError(f"fitted power is not positive for {samples.vehicle_label!r}")
    return RateCurve.from_arrays(knots, power, monotone=enforce_monotone)


def synthetic_samples(curve: RateCurve, n: int, noise: float = 0.0, seed: int = 0,
                      label: str = "synthetic") -> RateSampleSet:
    """Uniform-SoC samples of `curve` with uniform noise of the given amplitude."""
    rng = np.random.default_rng(seed)
    soc = np.sort(rng.uniform(0.0, 1.0, n))
    power = np.interp(soc, curve.soc, curve.power) + rng.uniform(-noise, noise, n)
    return RateSampleSet(label, tuple(zip(soc, power)))


# Illustrative shapes with the qualitative features of published DC fast
# charging curves: a fast car tapering early, a slower car with a sharp drop
# at 80 % SoC, and one in between. Power relative to capacity (1/h).
REFERENCE_SHAPES = {
    "audi_like": ((0.0, 2.4), (0.5, 2.3), (0.8, 1.5), (1.0, 0.8)),
    "ford_like": ((0.0, 1.6), (0.8, 1.5), (0.82, 0.7), (1.0, 0.5)),
    "tesla_like": ((0.0, 2.5), (0.3, 2.2), (0.6, 1.4), (1.0, 0.7)),
}


def reference_curve(name: str) -> RateCurve:
    return RateCurve(REFERENCE_SHAPES[name], monotone=True)


# --- serialisation -----------------------------------------------------------

def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from exc


def _read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise SampleFormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def rate_curve_to_dict(curve: RateCurve) -> dict:
    return {"knots": [[_round(s), _round(p)] for s, p in curve.knots], "monotone": curve.monotone}


def rate_curve_from_dict(data: dict) -> RateCurve:
    return RateCurve(tuple(tuple(k) for k in data["knots"]), bool(data.get("monotone", False)))


def charging_form_to_dict(f: ChargingTimeFn) -> dict:
    if isinstance(f, ClosedFormChargingTime):
        return {"family": f.family, "coefficients": [_round(x) for x in f.coefficients]}
    if isinstance(f, RateChargingTime):
        out = rate_curve_to_dict(f.curve)
        out["capacity_e"] = _round(f.capacity_e)
        return out
    raise TypeError(f"cannot serialise {type(f).__name__}")


def charging_form_from_dict(data: dict, params: ModelParams) -> ChargingTimeFn:
    """Closed-form descriptor or knot list; a knot list may carry its own capacity."""
    if "family" in data:
        return ClosedFormChargingTime(data["family"], data.get("coefficients", ()), params.r_t)
    if "knots" in data:
        capacity = float(data.get("capacity_e", params.capacity_e))
        return RateChargingTime(rate_curve_from_dict(data), capacity, params.r_t)
    raise DomainError("charging form needs either 'family' or 'knots'")


def load_rate_curve(path) -> RateCurve:
    return rate_curve_from_dict(_read_json(path))


def load_charging_form(path, params: ModelParams) -> ChargingTimeFn:
    return charging_form_from_dict(_read_json(path), params)


def curve_csv(points: Iterable[Tuple[float, float]], header=("r", "y")) -> str:
    lines = [",".join(header)]
    lines += [f"{fmt(a)},{fmt(b)}" for a, b in points]
    return "\n".join(lines) + "\n"


def export_curve(obj, path, format: str = "csv", n: int = 201, r_range=None) -> None:
    """
    Write a curve-like object.

    Accepts a list of (r, y) points, an IndifferenceCurve (sampled at `n`
    points over `r_range`, default [c, r_t]), a RateCurve or a charging
    form.
    """
    if isinstance(obj, IndifferenceCurve):
        lo, hi = r_range or (obj.params.c, obj.params.r_t)
        obj = sample_curve(obj, lo, hi, n)
    if format == "csv":
        if isinstance(obj, RateCurve):
            text = curve_csv(obj.knots, header=("soc", "power"))
        else:
            text = curve_csv(obj)
    elif format == "json":
        if isinstance(obj, RateCurve):
            data = rate_curve_to_dict(obj)
        elif isinstance(obj, ChargingTimeFn):
            data = charging_form_to_dict(obj)
        else:
            data = {"points": [[_round(a), _round(b)] for a, b in obj]}
        text = _dump(data)
    else:
        raise ValueError(f"unknown format {format!r}")
    _write_text(path, text)


def solution_to_dict(solution: EquilibriumSolution, params: ModelParams) -> dict:
    classes = [
        {
            "label": label,
            "z": _round(curve.z),
            "beta": _round(beta),
            "weight": _round(weight),
            "indifferent_in_r": bool(flag),
        }
        for label, curve, beta, weight, flag in zip(
            solution.labels, solution.curves, solution.betas,
            solution.class_weights, solution.indifferent_in_r)
    ]
    out = {"model": solution.model}
    if len(classes) == 1:
        out["z"] = classes[0]["z"]
    out["alpha"] = _round(solution.alpha)
    out["classes"] = classes
    out["params"] = {k: _round(getattr(params, k))
                     for k in ("c", "tau", "r_t", "w_a_x", "w_b_x", "epsilon")}
    out["diagnostics"] = {"iterations": int(solution.iterations),
                          "residual": _round(solution.residual)}
    return out


def export_solution(solution: EquilibriumSolution, params: ModelParams, path,
                    format: str = "json") -> None:
    if format == "json":
        text = _dump(solution_to_dict(solution, params))
    elif format == "csv":
        lines = ["label,z,beta,weight,indifferent_in_r"]
        for row in solution_to_dict(solution, params)["classes"]:
            lines.append(f"{row['label']},{fmt(row['z'])},{fmt(row['beta'])},"
                         f"{fmt(row['weight'])},{str(row['indifferent_in_r']).lower()}")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {format!r}")
    _write_text(path, text)


def export_report(report_dict: dict, path) -> None:
    _write_text(path, _dump(report_dict))
