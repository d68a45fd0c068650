"""Equilibrium charging-station choice for EV drivers with SoC-dependent charging rates."""

from .curves import (
    BracketError,
    IndifferenceCurve,
    decide,
    make_curve,
    sample_curve,
    solve_y_at,
)
from .equilibrium import (
    EquilibriumSolution,
    congestion_integral,
    indifferent_exists,
    rho,
    solve_endogenous,
    solve_exogenous,
    solve_heterogeneous,
)
from .model import (
    ChargingTimeFn,
    ClosedFormChargingTime,
    CostBreakdown,
    Decision,
    DomainError,
    DriverState,
    ModelParams,
    RateChargingTime,
    RateCurve,
    charging_time,
    charging_time_derivative,
    eval_rate,
    psi,
    total_costs,
)
from .oracle import GridAssignment, VerificationReport, best_response_grid, verify_equilibrium

__version__ = "0.1.0"
