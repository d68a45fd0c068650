"""
Brute-force certification of equilibria on a driver grid.

Drivers sit at cell centres of an n_r x n_y grid over [c, r_t] x [0, 1].
Each one picks a station from the sign of T_B - T_A alone, with no use of
indifference curves, so agreement with the curve-based solvers is an
independent check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from .equilibrium import EquilibriumSolution
from .model import ChargingTimeFn, ModelParams, classify, delta_t


@dataclass
class GridAssignment:
    n_r: int
    n_y: int
    r: np.ndarray
    y: np.ndarray
    choices: np.ndarray  # int8, shape (n_r, n_y): 1 = A, -1 = B, 0 = indifferent
    alpha_empirical: float

    def boundary(self) -> np.ndarray:
        """Per column, the height below which drivers choose A (ties count half)."""
        score = (self.choices == 1) + 0.5 * (self.choices == 0)
        return score.sum(axis=1) / self.n_y

    def columns_sorted(self) -> bool:
        """Every column is a block of A's below a block of B's."""
        return bool(np.all(np.diff(self.choices.astype(int), axis=1) <= 0))


def grid_points(params: ModelParams, n_r: int, n_y: int):
    if n_r < 2 or n_y < 2:
        raise ValueError(f"grid needs n_r, n_y >= 2, got {n_r}, {n_y}")
    r = params.c + (np.arange(n_r) + 0.5) * (params.r_t - params.c) / n_r
    y = (np.arange(n_y) + 0.5) / n_y
    return r, y


def _share(choices: np.ndarray) -> float:
    return float(((choices == 1).sum() + 0.5 * (choices == 0).sum()) / choices.size)


def best_response_grid(f: ChargingTimeFn, params: ModelParams, congestion_share=None,
                       model: str = "exogenous", n_r: int = 400, n_y: int = 400) -> GridAssignment:
    r, y = grid_points(params, n_r, n_y)
    rr, yy = np.meshgrid(r, y, indexing="ij")
    if model == "exogenous":
        congestion_share = None
    choices = classify(delta_t(f, params, rr, yy, congestion_share, model))
    return GridAssignment(n_r, n_y, r, y, choices, _share(choices))


@dataclass
class VerificationReport:
    max_boundary_error: float
    boundary_tolerance: float
    alpha_empirical: float
    alpha_solution: float
    alpha_error: float
    alpha_tolerance: float
    off_band_violations: int
    band_violations: int
    columns_sorted: bool
    n_r: int
    n_y: int
    per_class_alpha: List[float] = field(default_factory=list)

    @property
    def boundary_ok(self) -> bool:
        return self.max_boundary_error <= self.boundary_tolerance

    @property
    def alpha_ok(self) -> bool:
        return self.alpha_error <= self.alpha_tolerance

    @property
    def fixed_point_ok(self) -> bool:
        return self.off_band_violations == 0

    @property
    def passed(self) -> bool:
        return self.boundary_ok and self.alpha_ok and self.fixed_point_ok

    def failed_checks(self) -> List[str]:
        names = []
        if not self.boundary_ok:
            names.append("boundary")
        if not self.alpha_ok:
            names.append("alpha")
        if not self.fixed_point_ok:
            names.append("fixed_point")
        return names

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failed_checks": self.failed_checks(),
            "boundary": {"max_error": self.max_boundary_error, "tolerance": self.boundary_tolerance},
            "alpha": {
                "empirical": self.alpha_empirical,
                "solution": self.alpha_solution,
                "error": self.alpha_error,
                "tolerance": self.alpha_tolerance,
                "per_class_empirical": self.per_class_alpha,
            },
            "fixed_point": {
                "off_band_violations": self.off_band_violations,
                "band_violations": self.band_violations,
            },
            "columns_sorted": self.columns_sorted,
            "grid": {"n_r": self.n_r, "n_y": self.n_y},
        }


def verify_equilibrium(f: Union[ChargingTimeFn, Sequence[ChargingTimeFn]], params: ModelParams,
                       solution: EquilibriumSolution, n_r: int = 500, n_y: int = 500,
                       band_cells: int = 2) -> VerificationReport:
    """
    Certify a solution against grid best responses.

    Three checks:

    1. Per column, the A/B switch of the grid best response to the
       solution's congestion lies within `band_cells` cells of the curve.
    2. The grid share of A-choosers matches solution.alpha within
       max(2/n, 1e-3).
    3. Re-evaluating every driver against the grid's own share changes
       choices only within `band_cells` cells of the curve.
    """
    fs = list(f) if isinstance(f, (list, tuple)) else [f]
    if len(fs) != len(solution.curves):
        raise ValueError("need one charging-time function per solution class")
    model = solution.model
    weights = np.asarray(solution.class_weights, float)
    share = None if model == "exogenous" else solution.alpha
    cell = 1.0 / n_y

    grids = [best_response_grid(fi, params, share, model, n_r, n_y) for fi in fs]
    curve_heights = [np.asarray(c(grids[0].r)) for c in solution.curves]

    boundary_error = max(
        float(np.max(np.abs(g.boundary() - np.clip(h, 0.0, 1.0))))
        for g, h in zip(grids, curve_heights)
    )
    class_alpha = [g.alpha_empirical for g in grids]
    alpha_emp = float(np.dot(weights, class_alpha))

    off_band = band = 0
    for fi, g, h in zip(fs, grids, curve_heights):
        again = best_response_grid(fi, params, None if model == "exogenous" else alpha_emp,
                                   model, n_r, n_y)
        changed = again.choices != g.choices
        near = np.abs(g.y[None, :] - h[:, None]) <= band_cells * cell
        off_band += int(np.sum(changed & ~near))
        band += int(np.sum(changed & near))

    n = max(n_r, n_y)
    return VerificationReport(
        max_boundary_error=boundary_error,
        boundary_tolerance=band_cells * cell,
        alpha_empirical=alpha_emp,
        alpha_solution=float(solution.alpha),
        alpha_error=abs(alpha_emp - solution.alpha),
        alpha_tolerance=max(2.0 / n, 1e-3),
        off_band_violations=off_band,
        band_violations=band,
        columns_sorted=all(g.columns_sorted() for g in grids),
        n_r=n_r,
        n_y=n_y,
        per_class_alpha=class_alpha,
    )


def write_grid_csv(grid: GridAssignment, path) -> None:
    rr, yy = np.meshgrid(grid.r, grid.y, indexing="ij")
    names = {1: "StationA", 0: "Indifferent", -1: "StationB"}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "y", "choice"])
        for r, y, ch in zip(rr.ravel(), yy.ravel(), grid.choices.ravel()):
            writer.writerow([format(r, ".12g"), format(y, ".12g"), names[int(ch)]])
