"""
Equilibrium initial values for the exogenous, endogenous and multi-class games.

Every equilibrium is an indifference curve through (r_t, z). What changes
between models is the condition pinning down z:

* exogenous:      psi(r_t, z) = w_A - w_B - tau
* endogenous:     psi(r_t, z) = w_A - w_B - tau - eps + 2 eps A(z)
* heterogeneous:  each class solves the endogenous condition at a shared
                  congestion alpha, and alpha = sum_i W_i A_i(z_i(alpha))

A(z) is the share of drivers below the curve, i.e. the share choosing A,
under a uniform distribution over [c, r_t] x [0, 1].
"""

from __future__ import annotations

import bisect
import logging
import os
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .curves import (
    INITIAL_BRACKET,
    TOL_Y,
    IndifferenceCurve,
    bisect_decreasing,
    make_curve,
    solve_level,
    solve_y_at,
)
from .model import ChargingTimeFn, DomainError, ModelParams, psi

log = logging.getLogger(__name__)

DEFAULT_QUAD_POINTS = 2049
QUAD_POINTS_ENV = "CHARGE_EQ_QUAD_POINTS"
TOL_Z = 1e-10
TOL_ALPHA = 1e-10
MODELS = ("exogenous", "endogenous", "heterogeneous")


def quad_points() -> int:
    raw = os.environ.get(QUAD_POINTS_ENV)
    if raw is None:
        return DEFAULT_QUAD_POINTS
    n = int(raw)
    if n < 2:
        raise DomainError(f"{QUAD_POINTS_ENV} must be >= 2, got {n}")
    return n


@dataclass
class EquilibriumSolution:
    model: str
    curves: List[IndifferenceCurve]
    alpha: float
    betas: List[float]
    class_weights: List[float]
    indifferent_in_r: List[bool]
    labels: List[str] = field(default_factory=list)
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if not self.labels:
            self.labels = [f"class{i + 1}" for i in range(len(self.curves))]

    @property
    def z(self) -> float:
        return self.curves[0].z

    @property
    def zs(self) -> List[float]:
        return [c.z for c in self.curves]

    def with_z(self, z: float, index: int = 0) -> "EquilibriumSolution":
        """Copy with one class moved to another initial value; alpha follows the new curve."""
        curves = list(self.curves)
        old = curves[index]
        curves[index] = make_curve(old.f, old.params, z)
        betas = list(self.betas)
        betas[index] = congestion_integral(curves[index], old.params)
        alpha = float(np.dot(self.class_weights, betas))
        flags = list(self.indifferent_in_r)
        flags[index] = bool(0.0 <= z <= 1.0)
        return EquilibriumSolution(self.model, curves, alpha, betas, list(self.class_weights),
                                   flags, list(self.labels), self.iterations, float("nan"))


def congestion_integral(curve: IndifferenceCurve, params: ModelParams, n_quad: int = None) -> float:
    """
    Share of the region lying below the curve.

    Composite trapezoid rule on the clamped curve min(1, max(0, g)) over
    [c, r_t], normalised by the interval length.
    """
    n = quad_points() if n_quad is None else int(n_quad)
    r = np.linspace(params.c, params.r_t, n)
    h = np.clip(solve_y_at(curve, r), 0.0, 1.0)
    return float(trapezoid(h, r) / (params.r_t - params.c))


class _AreaMemo:
    """
    A(z) for many z with warm-started curve solves.

    Curves never cross, so the heights at z lie between those of the nearest
    already-solved z on either side; each per-r bisection starts from that
    band instead of the default bracket.
    """

    def __init__(self, f: ChargingTimeFn, params: ModelParams, n_quad: int):
        self.f = f
        self.params = params
        self.r = np.linspace(params.c, params.r_t, n_quad)
        self._zs: List[float] = []
        self._heights: List[np.ndarray] = []

    def heights(self, z: float) -> np.ndarray:
        i = bisect.bisect_left(self._zs, z)
        if i < len(self._zs) and self._zs[i] == z:
            return self._heights[i]
        lo = self._heights[i - 1] - TOL_Y if i > 0 else INITIAL_BRACKET[0]
        hi = self._heights[i] + TOL_Y if i < len(self._zs) else INITIAL_BRACKET[1]
        k = float(psi(self.f, self.params, self.params.r_t, z))
        y = solve_level(self.f, self.params, self.r, k, lo=lo, hi=hi)
        y = np.where(self.r == self.params.r_t, z, y)
        self._zs.insert(i, z)
        self._heights.insert(i, y)
        return y

    def area(self, z: float) -> float:
        h = np.clip(self.heights(z), 0.0, 1.0)
        return float(trapezoid(h, self.r) / (self.params.r_t - self.params.c))


def exogenous_level(params: ModelParams) -> float:
    return params.w_a_x - params.w_b_x - params.tau


def endogenous_level(params: ModelParams, alpha: float) -> float:
    return exogenous_level(params) - params.epsilon + 2.0 * params.epsilon * alpha


def _solve_z(f, params, level_of_z):
    """Bisect psi(r_t, z) - level(z) on z, level possibly depending on z."""
    r_t = params.r_t

    def excess(z):
        return np.asarray(psi(f, params, r_t, z) - level_of_z(float(z)))

    z, iterations = bisect_decreasing(excess, np.array(0.0), tol=TOL_Z)
    return float(z), iterations


def solve_exogenous(f: ChargingTimeFn, params: ModelParams) -> EquilibriumSolution:
    level = exogenous_level(params)
    z, iterations = _solve_z(f, params, lambda z: level)
    curve = make_curve(f, params, z)
    alpha = congestion_integral(curve, params)
    return EquilibriumSolution(
        model="exogenous",
        curves=[curve],
        alpha=alpha,
        betas=[alpha],
        class_weights=[1.0],
        indifferent_in_r=[bool(0.0 <= z <= 1.0)],
        iterations=iterations,
        residual=abs(curve.k - level),
    )


def rho(f: ChargingTimeFn, params: ModelParams, z: float, n_quad: int = None) -> float:
    """Endogenous equilibrium residual; strictly decreasing in z, zero at equilibrium."""
    curve = make_curve(f, params, z)
    a = congestion_integral(curve, params, n_quad) if params.epsilon else 0.0
    return curve.k - endogenous_level(params, a)


def solve_endogenous(f: ChargingTimeFn, params: ModelParams) -> EquilibriumSolution:
    n_quad = quad_points()
    if params.epsilon:
        memo = _AreaMemo(f, params, n_quad)

        def level(z):
            return endogenous_level(params, memo.area(z))
    else:
        base = exogenous_level(params)

        def level(z):
            return base

    z, iterations = _solve_z(f, params, level)
    curve = make_curve(f, params, z)
    alpha = congestion_integral(curve, params, n_quad)
    return EquilibriumSolution(
        model="endogenous",
        curves=[curve],
        alpha=alpha,
        betas=[alpha],
        class_weights=[1.0],
        indifferent_in_r=[bool(0.0 <= z <= 1.0)],
        iterations=iterations,
        residual=abs(curve.k - endogenous_level(params, alpha)),
    )


def _check_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("need at least one class")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise DomainError(f"class weights must be positive, got {w.tolist()}")
    if abs(w.sum() - 1.0) > 1e-9:
        raise DomainError(f"class weights must sum to 1, got {w.sum()}")
    return w


def solve_heterogeneous(
    classes: Sequence[Tuple[ChargingTimeFn, float]],
    params: ModelParams,
    labels: Sequence[str] = (),
) -> EquilibriumSolution:
    """
    Shared-congestion equilibrium over several charging-time classes.

    For a trial congestion alpha every class solves its own initial value
    z_i(alpha); z_i is non-increasing in alpha, so
    Phi(alpha) = alpha - sum_i W_i A_i(z_i(alpha)) is strictly increasing with
    Phi(0) <= 0 <= Phi(1), and bisection on [0, 1] finds its unique root.
    A single class is the plain endogenous game.
    """
    fs = [f for f, _ in classes]
    weights = _check_weights([w for _, w in classes])
    labels = list(labels)

    if len(fs) == 1:
        sol = solve_endogenous(fs[0], params)
        sol.model = "heterogeneous"
        sol.labels = labels or sol.labels
        return sol

    n_quad = quad_points()

    memos = [_AreaMemo(f, params, n_quad) for f in fs]

    def class_shares(alpha):
        level = endogenous_level(params, alpha)
        curves = [make_curve(f, params, solve_level(f, params, params.r_t, level)) for f in fs]
        return curves, np.array([m.area(c.z) for m, c in zip(memos, curves)])

    def neg_phi(alpha):
        _, shares = class_shares(float(alpha))
        return np.asarray(float(np.dot(weights, shares)) - float(alpha))

    alpha, iterations = bisect_decreasing(neg_phi, np.array(0.0), lo=0.0, hi=1.0, tol=TOL_ALPHA)
    alpha = float(alpha)
    curves, shares = class_shares(alpha)
    return EquilibriumSolution(
        model="heterogeneous",
        curves=curves,
        alpha=alpha,
        betas=shares.tolist(),
        class_weights=weights.tolist(),
        indifferent_in_r=[bool(0.0 <= c.z <= 1.0) for c in curves],
        labels=labels,
        iterations=iterations,
        residual=abs(alpha - float(np.dot(weights, shares))),
    )


def solve(model: str, classes, params: ModelParams, labels: Sequence[str] = ()) -> EquilibriumSolution:
    """Dispatch on the model name; homogeneous models use the first class only."""
    if model == "exogenous":
        sol = solve_exogenous(classes[0][0], params)
    elif model == "endogenous":
        sol = solve_endogenous(classes[0][0], params)
    elif model == "heterogeneous":
        return solve_heterogeneous(classes, params, labels)
    else:
        raise DomainError(f"unknown model {model!r}; expected one of {MODELS}")
    if labels:
        sol.labels = [labels[0]]
    return sol


def indifferent_exists(f: ChargingTimeFn, params: ModelParams, model: str = "exogenous") -> bool:
    """
    Closed-form test for an indifferent driver inside the feasible region.

    Valid for concave F (non-increasing charging rate):
    F(r_t - c) - F(r_t) >= -tau + |w_A - w_B|, with an extra -eps on the
    right-hand side for the endogenous model.
    """
    if not f.is_concave:
        log.warning("existence test assumes a non-increasing charging rate")
    lhs = f(params.r_t - params.c) - f(params.r_t)
    rhs = -params.tau + abs(params.w_a_x - params.w_b_x)
    if model in ("endogenous", "heterogeneous"):
        rhs -= params.epsilon
    elif model != "exogenous":
        raise DomainError(f"unknown model {model!r}")
    return bool(lhs >= rhs)
