from .admm import solve_pilots, update_slack, update_x1, update_x2
from .power import golden_section_max, power_interval, power_objective, solve_power
from .problem import (
    DesignState,
    ProblemSpec,
    QpSolver,
    SlackCoupling,
    SolverOptions,
    SolverTrace,
    TraceRecord,
    repair_pilots,
    restore_feasibility,
    xi_matrix,
)
from .qp import SlabQP, solve_kkt, solve_projected_gradient
from .solver import SolveResult, best_pilot_share, resolve_scales, solve, solve_multistart, split_design

__all__ = [
    "DesignState",
    "ProblemSpec",
    "QpSolver",
    "SlabQP",
    "SlackCoupling",
    "SolveResult",
    "SolverOptions",
    "SolverTrace",
    "TraceRecord",
    "best_pilot_share",
    "golden_section_max",
    "power_interval",
    "power_objective",
    "repair_pilots",
    "resolve_scales",
    "restore_feasibility",
    "solve",
    "solve_kkt",
    "solve_multistart",
    "solve_pilots",
    "solve_power",
    "solve_projected_gradient",
    "split_design",
    "update_slack",
    "update_x1",
    "update_x2",
    "xi_matrix",
]
