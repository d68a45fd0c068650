"""
Indifference curves.

An indifference curve is the level set psi(r, y) = k. Along it the ODE

    (c F'(r-c+cy) + c F'(r-cy) - 2 tau) dy/dr = -(F'(r-c+cy) - F'(r-cy))

holds, so the level value k is its conserved quantity. A curve is labelled by
its height z at r = r_t and solved pointwise by bisection on the strictly
decreasing map y -> psi(r, y), never by stepping the ODE. Bisection needs
only continuity, so kinked charging-time functions work unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import (
    ChargingTimeFn,
    Decision,
    DriverState,
    ModelParams,
    psi,
)

log = logging.getLogger(__name__)

TOL_Y = 1e-10
TOL_RESIDUAL = 1e-8
MAX_EXPANSIONS = 60
INITIAL_BRACKET = (-1.0, 2.0)


class BracketError(RuntimeError):
    """Bracket expansion did not produce a sign change."""


def bisect_decreasing(func, target, lo=INITIAL_BRACKET[0], hi=INITIAL_BRACKET[1],
                      tol=TOL_Y, max_expansions=MAX_EXPANSIONS):
    """
    Solve func(x) = target for a strictly decreasing, elementwise func.

    `target` may be an array; every element is solved simultaneously. The
    bracket starts at [lo, hi] (scalars or arrays) and each side is pushed outward by the current
    width until func - target changes sign, then bisected until the width is
    at most `tol`.

    Returns
    -------
    x : ndarray
        Bracket midpoints.
    iterations : int
        Bisection steps taken.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()

    for _ in range(max_expansions):
        low_bad = func(lo) < target
        high_bad = func(hi) > target
        if not (low_bad.any() or high_bad.any()):
            break
        width = hi - lo
        lo = np.where(low_bad, lo - width, lo)
        hi = np.where(high_bad, hi + width, hi)
    else:
        if (func(lo) < target).any() or (func(hi) > target).any():
            raise BracketError(f"no sign change after {max_expansions} expansions")

    iterations = 0
    while True:
        mid = 0.5 * (lo + hi)
        if np.all(hi - lo <= tol) or np.all((mid == lo) | (mid == hi)):
            return mid, iterations
        above = func(mid) >= target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        iterations += 1


@dataclass(frozen=True)
class IndifferenceCurve:
    """Level set of psi through (r_t, z); k is the level value."""

    f: ChargingTimeFn
    params: ModelParams
    z: float
    k: float

    def __call__(self, r):
        return solve_y_at(self, r)


def make_curve(f: ChargingTimeFn, params: ModelParams, z: float) -> IndifferenceCurve:
    return IndifferenceCurve(f, params, float(z), float(psi(f, params, params.r_t, z)))


def curve_from_level(f: ChargingTimeFn, params: ModelParams, k: float) -> IndifferenceCurve:
    """Curve whose level value is k, with z recovered at r_t."""
    z = solve_level(f, params, params.r_t, k)
    return IndifferenceCurve(f, params, float(z), float(k))


def solve_level(f, params, r, k, tol=TOL_Y, lo=INITIAL_BRACKET[0], hi=INITIAL_BRACKET[1]):
    """The unique y with psi(r, y) = k (vectorised over r)."""
    r = np.asarray(r, dtype=float)
    y, _ = bisect_decreasing(
        lambda y: psi(f, params, r, y), np.broadcast_to(float(k), r.shape).copy(),
        lo=lo, hi=hi, tol=tol,
    )
    return float(y) if y.ndim == 0 else y


def solve_y_at(curve: IndifferenceCurve, r):
    """
    Height g(r, z) of the curve at one or more r.

    Values at r = r_t return z itself, so the initial condition is exact.
    """
    r = np.asarray(r, dtype=float)
    y = np.asarray(solve_level(curve.f, curve.params, r, curve.k))
    y = np.where(r == curve.params.r_t, curve.z, y)
    return float(y) if y.ndim == 0 else y


def residual(curve: IndifferenceCurve, r) -> np.ndarray:
    """|psi(r, g(r, z)) - k|, the conservation error."""
    return np.abs(np.asarray(psi(curve.f, curve.params, r, solve_y_at(curve, r))) - curve.k)


def sample_curve(curve: IndifferenceCurve, r_lo: float, r_hi: float, n: int):
    """n equally spaced (r, y) points on [r_lo, r_hi]."""
    if not r_lo < r_hi:
        raise ValueError(f"need r_lo < r_hi, got {r_lo}, {r_hi}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    r = np.linspace(r_lo, r_hi, n)
    y = np.asarray(solve_y_at(curve, r))
    return list(zip(r.tolist(), y.tolist()))


def decide(f: ChargingTimeFn, params: ModelParams, driver: DriverState,
           curve: IndifferenceCurve, tol: float = TOL_Y) -> Decision:
    """
    Station A below the curve, B above it, indifferent within `tol`.

    psi(r, .) is strictly decreasing, so y + tol < g(r) exactly when
    psi(r, y + tol) > k; the band test needs no root finding.
    """
    if not driver.in_region(params):
        log.warning("driver %s lies outside the feasible region", driver)
    if driver.r == curve.params.r_t:
        g = curve.z
        if driver.y < g - tol:
            return Decision.STATION_A
        if driver.y > g + tol:
            return Decision.STATION_B
        return Decision.INDIFFERENT
    if psi(curve.f, curve.params, driver.r, driver.y + tol) > curve.k:
        return Decision.STATION_A
    if psi(curve.f, curve.params, driver.r, driver.y - tol) < curve.k:
        return Decision.STATION_B
    return Decision.INDIFFERENT
