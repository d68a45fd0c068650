"""
Game constants, charging-rate curves, charging-time functions and driver costs.

Two stations sit at the ends of the unit segment (A at y=0, B at y=1). A
driver is the pair (r, y) of remaining state-of-charge and position. The cost
of a station is waiting + travelling + charging time, where charging time is

    F(r) = integral_r^{r_t} E / P(s) ds

for a charging-rate curve P. F is extended beyond [0, 1] by its tangent lines
so every driver in the plane has a well-defined cost.

All arithmetic is vectorised: scalar or array arguments broadcast with numpy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

# |delta_t| at or below this is an indifferent driver
INDIFFERENCE_TOL = 1e-9


class DomainError(ValueError):
    """An argument violates a documented bound."""


class Decision(enum.IntEnum):
    STATION_A = 1
    INDIFFERENT = 0
    STATION_B = -1

    def __str__(self) -> str:
        return {1: "StationA", 0: "Indifferent", -1: "StationB"}[int(self)]


@dataclass(frozen=True)
class ModelParams:
    """
    Constants shared by every driver.

    Parameters
    ----------
    c : float
        SoC consumed per unit distance.
    tau : float
        Travel time across the whole segment.
    r_t : float
        Target state-of-charge every driver charges to.
    w_a_x, w_b_x : float
        Exogenous waiting time at Station A / B.
    epsilon : float
        Waiting time at a station when every driver goes there.
    capacity_e : float
        Battery capacity E used when F is built from a rate curve.
    """

    c: float
    tau: float
    r_t: float = 1.0
    w_a_x: float = 0.0
    w_b_x: float = 0.0
    epsilon: float = 0.0
    capacity_e: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.c < self.r_t <= 1.0):
            raise DomainError(f"need 0 < c < r_t <= 1, got c={self.c}, r_t={self.r_t}")
        if not self.tau > 0.0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if not self.capacity_e > 0.0:
            raise DomainError(f"capacity_e must be > 0, got {self.capacity_e}")
        for name in ("epsilon", "w_a_x", "w_b_x"):
            value = getattr(self, name)
            if not value >= 0.0:
                raise DomainError(f"{name} must be >= 0, got {value}")

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class RateCurve:
    """Charging power as a piecewise-linear function of SoC on [0, 1]."""

    knots: Tuple[Tuple[float, float], ...]
    monotone: bool = False

    def __post_init__(self):
        knots = tuple((float(s), float(p)) for s, p in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 2:
            raise DomainError("a rate curve needs at least 2 knots")
        soc = np.array([k[0] for k in knots])
        power = np.array([k[1] for k in knots])
        if soc[0] != 0.0 or soc[-1] != 1.0:
            raise DomainError("rate curve knots must start at soc 0 and end at soc 1")
        if np.any(np.diff(soc) <= 0):
            raise DomainError("rate curve soc values must be strictly increasing")
        if np.any(power <= 0) or not np.all(np.isfinite(power)):
            raise DomainError("rate curve power values must be strictly positive")
        if self.monotone and np.any(np.diff(power) > 0):
            raise DomainError("rate curve flagged monotone but power increases")

    @property
    def soc(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def power(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    @property
    def is_non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.power) <= 0))

    @classmethod
    def from_arrays(cls, soc, power, monotone: bool = False) -> "RateCurve":
        return cls(tuple(zip(np.asarray(soc, float), np.asarray(power, float))), monotone)


def eval_rate(curve: RateCurve, soc: ArrayLike) -> ArrayLike:
    """Charging power at `soc` by linear interpolation between knots."""
    s = np.asarray(soc, dtype=float)
    if np.any((s < 0.0) | (s > 1.0)) or np.any(np.isnan(s)):
        raise DomainError(f"soc must lie in [0, 1], got {soc}")
    out = np.interp(s, curve.soc, curve.power)
    return float(out) if out.ndim == 0 else out


class ChargingTimeFn:
    """
    Charging time F on the whole real line.

    Subclasses define F and F' on the base interval [0, 1]; outside it F
    continues along its tangent lines, which keeps it C^1, strictly
    decreasing (given non-zero end slopes) and concave whenever the base
    part is concave.
    """

    r_t: float

    def _inner(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inner_derivative(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @cached_property
    def left_slope(self) -> float:
        return float(self._inner_derivative(np.array(0.0)))

    @cached_property
    def right_slope(self) -> float:
        return float(self._inner_derivative(np.array(1.0)))

    @cached_property
    def _ends(self) -> Tuple[float, float]:
        return float(self._inner(np.array(0.0))), float(self._inner(np.array(1.0)))

    def __call__(self, r: ArrayLike) -> ArrayLike:
        r = np.asarray(r, dtype=float)
        below, above = r < 0.0, r > 1.0
        if below.any() or above.any():
            f0, f1 = self._ends
            out = self._inner(np.clip(r, 0.0, 1.0))
            out = np.where(below, f0 + self.left_slope * r, out)
            out = np.where(above, f1 + self.right_slope * (r - 1.0), out)
        else:
            out = np.asarray(self._inner(r), dtype=float)
        return float(out) if out.ndim == 0 else out

    def derivative(self, r: ArrayLike) -> ArrayLike:
        r = np.asarray(r, dtype=float)
        out = self._inner_derivative(np.clip(r, 0.0, 1.0))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def is_concave(self) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class RateChargingTime(ChargingTimeFn):
    """
    F built from a sampled rate curve.

    E/P is integrated exactly per linear segment of P, giving a logarithm on
    sloped segments and an affine term on flat ones. Cumulative integrals
    from soc 0 to each knot are tabulated once.
    """

    def __init__(self, curve: RateCurve, capacity_e: float, r_t: float):
        if capacity_e <= 0:
            raise DomainError("capacity_e must be > 0")
        if not 0.0 < r_t <= 1.0:
            raise DomainError("r_t must lie in (0, 1]")
        self.curve = curve
        self.capacity_e = float(capacity_e)
        self.r_t = float(r_t)
        self._soc = curve.soc
        self._power = curve.power
        self._slope = np.diff(self._power) / np.diff(self._soc)
        self._cumulative = np.concatenate(
            [[0.0], np.cumsum(self._partial(np.arange(len(self._soc) - 1), np.diff(self._soc)))]
        )
        self._offset = float(self._cumulative_at(np.array(self.r_t)))

    def _partial(self, idx, d):
        # integral over [s_i, s_i + d] of E / (p_i + m_i (s - s_i))
        p0 = self._power[idx]
        x = np.atleast_1d(self._slope[idx] * d / p0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.log1p(x) / x
        small = np.abs(x) < 1e-8
        if small.any():
            xs = x[small]
            ratio[small] = 1.0 - xs / 2.0 + xs * xs / 3.0
        return self.capacity_e * d / p0 * ratio.reshape(np.shape(d))

    def _cumulative_at(self, r):
        idx = np.searchsorted(self._soc, r, side="right") - 1
        idx = np.clip(idx, 0, len(self._soc) - 2)
        return self._cumulative[idx] + self._partial(idx, r - self._soc[idx])

    def _inner(self, r):
        return self._offset - self._cumulative_at(r)

    def _inner_derivative(self, r):
        return -self.capacity_e / np.interp(r, self._soc, self._power)

    @property
    def is_concave(self) -> bool:
        return self.curve.is_non_increasing

    def to_dict(self) -> dict:
        return {
            "knots": [list(k) for k in self.curve.knots],
            "capacity_e": self.capacity_e,
        }


FAMILIES = ("affine", "quadratic", "cubic", "piecewise_flat")
_DEGREE = {"affine": 1, "quadratic": 2, "cubic": 3}


class ClosedFormChargingTime(ChargingTimeFn):
    """
    Analytic charging-time families.

    ``affine``, ``quadratic``, ``cubic`` with coefficients ``[a]`` give
    F(r) = a (r_t^n - r^n) for n = 1, 2, 3. ``a`` defaults to 1, so with
    r_t = 1 these are 1 - r, 1 - r^2 and 1 - r^3.

    ``piecewise_flat`` with coefficients ``[threshold, below, above]`` is the
    charging time of a rate that is flat on each side of ``threshold``;
    ``below`` and ``above`` are E/P on either side, i.e. minus the slope of F.

    Note that F' vanishes at r = 0 for the quadratic and cubic families, so
    their left tangent extension is flat.
    """

    def __init__(self, family: str, coefficients: Sequence[float] = (), r_t: float = 1.0):
        if family not in FAMILIES:
            raise DomainError(f"unknown family {family!r}; expected one of {FAMILIES}")
        coefficients = tuple(float(x) for x in coefficients)
        if family in _DEGREE:
            if len(coefficients) == 0:
                coefficients = (1.0,)
            if len(coefficients) != 1 or coefficients[0] <= 0:
                raise DomainError(f"{family} takes one positive scale coefficient")
        else:
            if len(coefficients) != 3:
                raise DomainError("piecewise_flat takes [threshold, below, above]")
            threshold, below, above = coefficients
            if not 0.0 < threshold < 1.0 or below <= 0 or above <= 0:
                raise DomainError("piecewise_flat needs 0 < threshold < 1 and positive slopes")
        if not 0.0 < r_t <= 1.0:
            raise DomainError("r_t must lie in (0, 1]")
        self.family = family
        self.coefficients = coefficients
        self.r_t = float(r_t)

    def _primitive(self, r):
        # G with F = G(r_t) - G(r)
        if self.family in _DEGREE:
            return self.coefficients[0] * r ** _DEGREE[self.family]
        threshold, below, above = self.coefficients
        return np.where(
            r <= threshold, below * r, below * threshold + above * (r - threshold)
        )

    def _inner(self, r):
        return self._primitive(np.asarray(self.r_t)) - self._primitive(r)

    def _inner_derivative(self, r):
        if self.family in _DEGREE:
            n = _DEGREE[self.family]
            return -n * self.coefficients[0] * np.asarray(r, float) ** (n - 1)
        threshold, below, above = self.coefficients
        return np.where(np.asarray(r) < threshold, -below, -above)

    @property
    def is_concave(self) -> bool:
        if self.family in _DEGREE:
            return True
        return self.coefficients[2] >= self.coefficients[1]

    def to_dict(self) -> dict:
        return {"family": self.family, "coefficients": list(self.coefficients)}

    def __repr__(self) -> str:
        return f"ClosedFormChargingTime({self.family!r}, {list(self.coefficients)}, r_t={self.r_t})"


def charging_time(f: ChargingTimeFn, r: ArrayLike) -> ArrayLike:
    return f(r)


def charging_time_derivative(f: ChargingTimeFn, r: ArrayLike) -> ArrayLike:
    return f.derivative(r)


def psi(f: ChargingTimeFn, params: ModelParams, r: ArrayLike, y: ArrayLike) -> ArrayLike:
    """
    Indifference function F(r - c + c y) - F(r - c y) - 2 tau y.

    Strictly decreasing in y; a driver is indifferent exactly when it equals
    w_A - w_B - tau (congestion terms included).
    """
    c = params.c
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    # r - c(1 - y) rather than r - c + cy: equal arguments at y = 1/2 exactly
    out = np.asarray(f(r - c * (1.0 - y))) - np.asarray(f(r - c * y)) - 2.0 * params.tau * y
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DriverState:
    r: float
    y: float

    def in_region(self, params: ModelParams) -> bool:
        return params.c <= self.r <= params.r_t and 0.0 <= self.y <= 1.0


@dataclass(frozen=True)
class CostBreakdown:
    wait_a: ArrayLike
    wait_b: ArrayLike
    travel_a: ArrayLike
    travel_b: ArrayLike
    charge_a: ArrayLike
    charge_b: ArrayLike
    total_a: ArrayLike = field(init=False)
    total_b: ArrayLike = field(init=False)
    delta_t: ArrayLike = field(init=False)

    def __post_init__(self):
        total_a = self.wait_a + self.travel_a + self.charge_a
        total_b = self.wait_b + self.travel_b + self.charge_b
        object.__setattr__(self, "total_a", total_a)
        object.__setattr__(self, "total_b", total_b)
        object.__setattr__(self, "delta_t", total_b - total_a)

    def decision(self) -> Decision:
        return classify(self.delta_t)

    def as_dict(self) -> dict:
        keys = ("wait_a", "wait_b", "travel_a", "travel_b", "charge_a", "charge_b",
                "total_a", "total_b", "delta_t")
        return {k: float(getattr(self, k)) for k in keys}


def waiting_times(params: ModelParams, congestion_share=None, model: str = "exogenous"):
    """Waiting times (w_A, w_B) for the chosen waiting model."""
    if model == "exogenous":
        return params.w_a_x, params.w_b_x
    if model in ("endogenous", "heterogeneous"):
        if congestion_share is None:
            raise DomainError("the endogenous model needs a congestion share")
        share = float(congestion_share)
        if not 0.0 <= share <= 1.0:
            raise DomainError(f"congestion share must lie in [0, 1], got {share}")
        return (params.w_a_x + params.epsilon * share,
                params.w_b_x + params.epsilon * (1.0 - share))
    raise DomainError(f"unknown model {model!r}")


def total_costs(
    f: ChargingTimeFn,
    params: ModelParams,
    driver: DriverState,
    congestion_share: float = None,
    model: str = "exogenous",
) -> CostBreakdown:
    wait_a, wait_b = waiting_times(params, congestion_share, model)
    r, y = driver.r, driver.y
    return CostBreakdown(
        wait_a=wait_a,
        wait_b=wait_b,
        travel_a=params.tau * y,
        travel_b=params.tau * (1.0 - y),
        charge_a=f(r - params.c * y),
        charge_b=f(r - params.c * (1.0 - y)),
    )


def delta_t(f, params, r, y, congestion_share=None, model="exogenous"):
    """Vectorised T_B - T_A over arrays of drivers."""
    wait_a, wait_b = waiting_times(params, congestion_share, model)
    r = np.asarray(r, float)
    y = np.asarray(y, float)
    total_a = wait_a + params.tau * y + np.asarray(f(r - params.c * y))
    total_b = wait_b + params.tau * (1.0 - y) + np.asarray(f(r - params.c * (1.0 - y)))
    return total_b - total_a


def classify(dt: ArrayLike, tol: float = INDIFFERENCE_TOL):
    """Map T_B - T_A to decisions; an array input gives an int8 array."""
    dt = np.asarray(dt, dtype=float)
    out = np.where(dt > tol, 1, np.where(dt < -tol, -1, 0)).astype(np.int8)
    return Decision(int(out)) if out.ndim == 0 else out
