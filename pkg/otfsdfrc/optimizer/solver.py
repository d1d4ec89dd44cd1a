"""Alternating optimization of the data power and the pilot symbols."""

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from loguru import logger

from ..diagnostics import get_collector
from ..metrics import MetricReport, evaluate_design
from .admm import solve_pilots
from .power import golden_section_max, solve_power
from .problem import (
    DesignState,
    ProblemSpec,
    SolverOptions,
    SolverTrace,
    TraceRecord,
    restore_feasibility,
)


@dataclass
class SolveResult:
    """Best design found, its trace, and the problem with resolved normalizers."""

    state: DesignState
    trace: SolverTrace
    spec: ProblemSpec
    objective: float
    power_only_objective: float
    converged: bool

    @property
    def p_c(self) -> float:
        return self.state.p_c

    @property
    def x_p(self) -> np.ndarray:
        return self.state.x_p

    def report(self) -> MetricReport:
        spec = self.spec
        return evaluate_design(
            self.state.p_c, self.state.x_p, spec.kernels, spec.model, spec.dictionary, spec.eta
        )


def split_design(spec: ProblemSpec, shape: np.ndarray, share: float) -> tuple[float, np.ndarray]:
    """Full-budget design spending `share` of the mainlobe on pilots shaped like `shape`."""
    kernels = spec.kernels
    shape = np.asarray(shape, dtype=complex)
    q_shape = float(np.vdot(shape, kernels.pilot_gram @ shape).real)
    if kernels.data_trace <= 0:
        share = 1.0
    x_p = np.zeros_like(shape)
    if q_shape > 0 and share > 0:
        x_p = shape * np.sqrt(share * spec.budget / q_shape)
    p_c = (1.0 - share) * spec.budget / kernels.data_trace if kernels.data_trace > 0 else 0.0
    return float(p_c), x_p


def resolve_scales(spec: ProblemSpec, p_c: float, x_p: np.ndarray) -> ProblemSpec:
    """Fill unset normalizers with the metrics of (p_c, x_p); non-positive values map to 1."""
    if spec.sinr_scale is not None and spec.isl_scale is not None:
        return spec
    sinr_scale = spec.sinr_scale
    if sinr_scale is None:
        value = spec.sinr(p_c, x_p)
        sinr_scale = value if value > 0 else 1.0
    isl_scale = spec.isl_scale
    if isl_scale is None:
        value = spec.isl(p_c, x_p)
        isl_scale = value if value > 0 else 1.0
    return spec.with_scales(sinr_scale, isl_scale)


def best_pilot_share(spec: ProblemSpec, shape: np.ndarray, tol: float = 1e-6) -> float:
    """Pilot share of the budget maximizing the weighted objective of `split_design`."""
    if spec.kernels.data_trace <= 0:
        return 1.0
    lo = 0.0
    kernels = spec.kernels
    q_shape = float(np.vdot(shape, kernels.pilot_gram @ shape).real)
    if q_shape <= 0:
        return 0.0

    def objective(share: float) -> float:
        return spec.objective(*split_design(spec, shape, share))

    share = golden_section_max(objective, lo, 1.0, tol)
    candidates = [share, lo, 1.0]
    values = [objective(t) for t in candidates]
    return float(candidates[int(np.argmax(values))])


def _record(spec: ProblemSpec, state: DesignState, objective: float) -> TraceRecord:
    return TraceRecord(
        n=state.n,
        m=state.m,
        objective=objective,
        sinr=spec.sinr(state.p_c, state.x_p),
        isl=spec.isl(state.p_c, state.x_p),
        primal_residual=state.primal_residual,
        dual_residual=state.dual_residual,
        p_c=state.p_c,
    )


def _power_step(spec: ProblemSpec, state: DesignState, options: SolverOptions) -> float:
    """Optimal p_c for the current pilots, never worse than the current one."""
    s1 = spec.trace_term(state.x_p)
    p_c = solve_power(spec, s1, state.x_p, options.eps_power_1d)
    if spec.objective(p_c, state.x_p) < spec.objective(state.p_c, state.x_p):
        return state.p_c
    return p_c


def solve(
    spec: ProblemSpec,
    options: SolverOptions,
    init: DesignState,
    trace: SolverTrace | None = None,
) -> SolveResult:
    """Alternate the p_c and pilot subproblems until the objective settles.

    A pilot step that lowers the objective is rejected and ends the
    alternation, so the accepted objectives in `trace.outer` never decrease.
    """
    trace = trace if trace is not None else SolverTrace()
    p_c, x_p = restore_feasibility(spec, init.p_c, init.x_p)
    spec = resolve_scales(spec, p_c, x_p)

    state = DesignState.initial(spec, p_c, x_p, options.rho, options.zeta)
    objective = spec.objective(state.p_c, state.x_p)
    trace.outer.append(_record(spec, state, objective))
    logger.debug(f"AO start: objective {objective:.6g}, p_c {state.p_c:.6g}")

    power_only = None
    converged = False
    for n in range(1, options.ao_max_iters + 1):
        p_c = _power_step(spec, state, options)
        state = state.copy(p_c=p_c, s1=spec.trace_term(state.x_p), n=n, m=0)
        powered = spec.objective(p_c, state.x_p)
        if power_only is None:
            power_only = powered

        candidate = solve_pilots(spec, options, p_c, state, trace)
        value = spec.objective(p_c, candidate.x_p)
        rejected = value < powered
        if rejected:
            logger.warning(
                f"AO {n}: pilot step lowered the objective ({powered:.6g} -> {value:.6g}); "
                "keeping the previous pilots"
            )
            get_collector().warning(
                "PILOT_STEP_REJECTED",
                "Pilot update decreased the weighted objective and was discarded",
                stage="optimize",
                ao_iteration=n,
                admm_iteration=candidate.m,
                context={"before": powered, "after": value},
            )
            state = state.copy(
                primal_residual=candidate.primal_residual, dual_residual=candidate.dual_residual
            )
            value = powered
        else:
            state = candidate

        trace.outer.append(_record(spec, state, value))
        logger.debug(
            f"AO {n}: objective {value:.6g}, p_c {state.p_c:.6g}, ADMM iterations {candidate.m}"
        )
        change = abs(value - objective)
        objective = value
        if rejected or change <= options.eps_obj * max(1.0, abs(objective)):
            converged = True
            break

    p_c = _power_step(spec, state, options)
    final = spec.objective(p_c, state.x_p)
    if final > objective:
        state = state.copy(p_c=p_c)
        objective = final
        trace.outer.append(_record(spec, state, objective))
    if not converged:
        logger.warning(f"AO stopped after {options.ao_max_iters} iterations without settling")

    logger.info(
        f"Design solved (eta={spec.eta:g}): objective {objective:.6g}, "
        f"SINR {spec.sinr(state.p_c, state.x_p):.6g}, ISL {spec.isl(state.p_c, state.x_p):.6g}"
    )
    return SolveResult(
        state=state,
        trace=trace,
        spec=spec,
        objective=objective,
        power_only_objective=power_only if power_only is not None else objective,
        converged=converged,
    )


def solve_multistart(
    starts: Mapping[str, tuple[ProblemSpec, DesignState]],
    options: SolverOptions,
) -> tuple[str, SolveResult]:
    """Solve every (problem, start) pair under shared normalizers; keep the best.

    The problems may differ in placement. Normalizers missing from the first
    problem are resolved from its start and then applied to all of them.
    """
    if not starts:
        raise ValueError("solve_multistart needs at least one starting design")
    first_spec, first = next(iter(starts.values()))
    anchor = resolve_scales(first_spec, *restore_feasibility(first_spec, first.p_c, first.x_p))
    best_name, best = None, None
    for name, (spec, init) in starts.items():
        logger.info(f"Multistart: solving from the '{name}' start")
        result = solve(spec.with_scales(anchor.sinr_scale, anchor.isl_scale), options, init)
        if best is None or result.objective > best.objective:
            best_name, best = name, result
    logger.info(f"Multistart: best start '{best_name}' with objective {best.objective:.6g}")
    return best_name, best
