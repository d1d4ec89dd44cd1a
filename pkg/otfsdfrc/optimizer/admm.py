"""ADMM over the split pilot variables (x1, x2) with an auxiliary slack A.

The pilot subproblem keeps two copies of the pilots so the quartic ISL term
becomes a convex quadratic in each copy. Each iteration runs

    x1 <- argmin over the first copy (sequential convex approximation of the
          SINR slack, then a slab-constrained QP)
    x2 <- argmin over the second copy (slab-constrained QP)
    A  <- least-squares solution of A Xi(x1, x2) = I
    d  <- d + x1 - x2                  (scaled dual)

with residual balancing of the penalty rho for the first `penalty_warmup`
iterations. After that rho grows geometrically up to `rho_max`; with the
unscaled dual rho d held fixed, the consensus gap x1 - x2 then shrinks like
1 / rho as the iterates settle.
"""

import numpy as np
from loguru import logger

from ..diagnostics import get_collector
from ..errors import SubproblemError
from ..metrics import isl_split, sinr_aux, sinr_aux_slope
from .problem import (
    DesignState,
    ProblemSpec,
    QpSolver,
    SlackCoupling,
    SolverOptions,
    SolverTrace,
    TraceRecord,
    repair_pilots,
    xi_matrix,
)
from .qp import EmptySlabError, SlabQP, solve_kkt, solve_projected_gradient

SLACK_COND_LIMIT = 1e12
SLACK_RIDGE = 1e-10


def _slab(spec: ProblemSpec, p_c: float, other: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Mainlobe and power constraints on one copy: lo <= Re(c^H x) <= hi."""
    data_part = p_c * spec.kernels.data_trace
    return spec.kernels.pilot_gram @ other, spec.xi_min - data_part, spec.budget - data_part


def _slack_rows_x1(spec: ProblemSpec, state: DesignState) -> tuple[np.ndarray, np.ndarray]:
    """(M, r) with A Xi(x1, x2) - I = M x1 - r, entries ordered row-major in (i, b)."""
    k_h = spec.model.k_h
    blocks = spec.dictionary.blocks
    coupling = spec.model.estimation_gain * state.A @ spec.dictionary.omega(state.x2).conj().T
    M = np.einsum("ir,brp->ibp", coupling, blocks).reshape(k_h * k_h, -1)
    return M, -(state.A - np.eye(k_h)).reshape(-1)


def _slack_rows_x2(spec: ProblemSpec, state: DesignState) -> tuple[np.ndarray, np.ndarray]:
    """(M, r) with conj(A Xi(x1, x2) - I) = M x2 - r."""
    k_h = spec.model.k_h
    blocks = spec.dictionary.blocks
    v1 = spec.dictionary.omega(state.x1)
    t = np.einsum("rb,arp->abp", v1.conj(), blocks)
    M = spec.model.estimation_gain * np.einsum("ia,abp->ibp", state.A.conj(), t)
    return M.reshape(k_h * k_h, -1), -np.conj(state.A - np.eye(k_h)).reshape(-1)


def _sca_direction(spec: ProblemSpec, state: DesignState) -> np.ndarray:
    """h with Tr(A Xi(x1, x2) A) = Tr(A^2) + (p sh2 / sn2) h^T x1."""
    z = state.A @ state.A @ spec.dictionary.omega(state.x2).conj().T
    return np.einsum("br,brp->p", z, spec.dictionary.blocks)


def _trace_bound(spec: ProblemSpec, state: DesignState, x1: np.ndarray, coupling: SlackCoupling) -> float:
    """Value taken by the SINR slack s1 after the x1 step."""
    model = spec.model
    A = state.A
    if coupling is SlackCoupling.LINEARIZED:
        h = _sca_direction(spec, state)
        inner = 2.0 * np.trace(A) - np.trace(A @ A) - model.estimation_gain * (h @ x1)
        return max(0.0, float(model.prior_variance * inner.real))
    return max(0.0, float(model.prior_variance * np.trace(A).real))


def _slack_residual(spec: ProblemSpec, state: DesignState, x1: np.ndarray, x2: np.ndarray) -> float:
    r = state.A @ xi_matrix(spec, x1, x2) - np.eye(spec.model.k_h)
    return float(np.sum(np.abs(r) ** 2))


def block_objective_x1(
    spec: ProblemSpec, state: DesignState, p_c: float, x1: np.ndarray, coupling: SlackCoupling
) -> float:
    """Augmented Lagrangian of the x1 block evaluated directly (no quadratic model)."""
    w_sinr, w_isl = spec.weights
    model = spec.model
    if coupling is SlackCoupling.LINEARIZED:
        xi = xi_matrix(spec, x1, state.x2)
        s1 = max(0.0, float(model.prior_variance * np.trace(np.linalg.inv(xi)).real))
    else:
        s1 = _trace_bound(spec, state, x1, coupling)
    value = -w_sinr * float(sinr_aux(p_c, s1, model.sigma_n_sq))
    value += w_isl * isl_split(p_c, x1, state.x2, spec.kernels)
    value += 0.5 * state.rho * float(np.sum(np.abs(x1 - state.x2 + state.d) ** 2))
    return value + 0.5 * state.zeta * _slack_residual(spec, state, x1, state.x2)


def block_objective_x2(spec: ProblemSpec, state: DesignState, p_c: float, x2: np.ndarray) -> float:
    """Augmented Lagrangian of the x2 block evaluated directly."""
    _, w_isl = spec.weights
    value = w_isl * isl_split(p_c, state.x1, x2, spec.kernels)
    value += 0.5 * state.rho * float(np.sum(np.abs(state.x1 - x2 + state.d) ** 2))
    return value + 0.5 * state.zeta * _slack_residual(spec, state, state.x1, x2)


def x1_qp(spec: ProblemSpec, state: DesignState, p_c: float, kappa: float = 0.0) -> SlabQP:
    """Quadratic model of the x1 block; `kappa` weights the linearized SINR slack."""
    kernels = spec.kernels
    _, w_isl = spec.weights
    k_p = spec.placement.k_p
    x2 = state.x2
    u = np.einsum("kij,j->ki", kernels.A_p, x2)
    P = w_isl * np.einsum("ki,kj->ij", u, u.conj()) + 0.5 * state.rho * np.eye(k_p)
    q = -0.5 * w_isl * p_c * np.einsum("kij,j->i", kernels.B, x2)
    q -= w_isl * p_c * np.einsum("k,ki->i", kernels.b.conj(), u)
    q += 0.5 * state.rho * (x2 - state.d)
    if state.zeta > 0:
        M, r = _slack_rows_x1(spec, state)
        P += 0.5 * state.zeta * (M.conj().T @ M)
        q += 0.5 * state.zeta * (M.conj().T @ r)
    if kappa > 0:
        h = _sca_direction(spec, state)
        q += 0.5 * kappa * spec.model.prior_variance * spec.model.estimation_gain * h.conj()
    c, lo, hi = _slab(spec, p_c, x2)
    return SlabQP(P=0.5 * (P + P.conj().T), q=q, c=c, lo=lo, hi=hi)


def x2_qp(spec: ProblemSpec, state: DesignState, p_c: float) -> SlabQP:
    kernels = spec.kernels
    _, w_isl = spec.weights
    k_p = spec.placement.k_p
    x1 = state.x1
    v = np.einsum("kji,j->ki", kernels.A_p.conj(), x1)  # A_p^H x1 per bin
    P = w_isl * np.einsum("ki,kj->ij", v, v.conj()) + 0.5 * state.rho * np.eye(k_p)
    q = -0.5 * w_isl * p_c * np.einsum("kij,j->i", kernels.B, x1)
    q -= w_isl * p_c * np.einsum("k,ki->i", kernels.b, v)
    q += 0.5 * state.rho * (x1 + state.d)
    if state.zeta > 0:
        M, r = _slack_rows_x2(spec, state)
        P += 0.5 * state.zeta * (M.conj().T @ M)
        q += 0.5 * state.zeta * (M.conj().T @ r)
    c, lo, hi = _slab(spec, p_c, x1)
    return SlabQP(P=0.5 * (P + P.conj().T), q=q, c=c, lo=lo, hi=hi)


def _solve_block(
    spec: ProblemSpec,
    qp: SlabQP,
    fallback: np.ndarray,
    p_c: float,
    options: SolverOptions,
    state: DesignState,
    block: str,
) -> np.ndarray:
    try:
        if options.qp_solver is QpSolver.PROJECTED_GRADIENT:
            return solve_projected_gradient(qp, fallback, options.qp_max_iters, options.qp_tol)
        return solve_kkt(qp)
    except EmptySlabError as e:
        # the other copy vanished; restore by rescaling this copy onto the constraints
        if not np.any(fallback):
            raise SubproblemError(str(e), stage=block, iteration=(state.n, state.m)) from e
        restored = repair_pilots(spec, p_c, fallback)
        logger.warning(f"{block}: empty constraint slab at {(state.n, state.m)}, rescaled pilots")
        get_collector().warning(
            "SLAB_RESTORED",
            f"Empty mainlobe slab in the {block} block; pilots rescaled",
            stage=block,
            ao_iteration=state.n,
            admm_iteration=state.m,
        )
        return restored


def update_x1(
    spec: ProblemSpec,
    state: DesignState,
    p_c: float,
    options: SolverOptions,
    history: list[float] | None = None,
) -> tuple[float, np.ndarray]:
    """Solve the x1 block; returns (s1, x1).

    With linearized coupling the concave SINR term is majorized by its tangent
    in s1 and the QP re-solved around the new s1 until the block objective
    settles; the iterate with the lowest true block objective is returned.
    """
    coupling = options.slack_coupling
    w_sinr, _ = spec.weights
    sigma_n_sq = spec.model.sigma_n_sq

    s_bar = state.s1
    best: tuple[float, np.ndarray] | None = None
    best_value = np.inf
    for _ in range(options.sca_max_iters):
        kappa = 0.0
        if coupling is SlackCoupling.LINEARIZED and w_sinr > 0:
            kappa = float(-w_sinr * sinr_aux_slope(p_c, s_bar, sigma_n_sq))
        qp = x1_qp(spec, state, p_c, kappa)
        x1 = _solve_block(spec, qp, state.x1, p_c, options, state, "x1")
        s1 = _trace_bound(spec, state, x1, coupling)

        value = block_objective_x1(spec, state, p_c, x1, coupling)
        if best is not None and value > best_value + 1e-12 * max(1.0, abs(best_value)):
            break
        settled = best is not None and best_value - value <= options.eps_obj * max(1.0, abs(value))
        best, best_value = (s1, x1), value
        if history is not None:
            history.append(value)
        if settled or kappa == 0.0:
            break
        s_bar = s1
    return best


def update_x2(spec: ProblemSpec, state: DesignState, p_c: float, options: SolverOptions) -> np.ndarray:
    qp = x2_qp(spec, state, p_c)
    return _solve_block(spec, qp, state.x2, p_c, options, state, "x2")


def update_slack(spec: ProblemSpec, state: DesignState, options: SolverOptions) -> np.ndarray:
    """A = argmin ||A Xi - I||_F^2, i.e. Xi^H (Xi Xi^H)^-1.

    Projected coupling additionally enforces (p sh2) Re Tr(A) <= s1.
    """
    k_h = spec.model.k_h
    xi = xi_matrix(spec, state.x1, state.x2)
    gram = xi @ xi.conj().T
    if np.linalg.cond(gram) > SLACK_COND_LIMIT:
        ridge = SLACK_RIDGE * float(np.sum(np.abs(xi) ** 2))
        gram = gram + ridge * np.eye(k_h)
        logger.warning(f"Xi Xi^H near singular at {(state.n, state.m)}; ridge {ridge:.3g} added")
        get_collector().warning(
            "SLACK_REGULARIZED",
            "Slack update regularized because Xi Xi^H is near singular",
            stage="slack",
            ao_iteration=state.n,
            admm_iteration=state.m,
            context={"ridge": ridge},
        )
    gram = 0.5 * (gram + gram.conj().T)
    A = np.linalg.solve(gram, xi).conj().T

    if options.slack_coupling is SlackCoupling.PROJECTED:
        scale = spec.model.prior_variance
        excess = scale * float(np.trace(A).real) - state.s1
        if excess > 0:
            w = np.linalg.inv(gram)
            A = A - excess / (scale * float(np.trace(w).real)) * w
    return A


def solve_pilots(
    spec: ProblemSpec,
    options: SolverOptions,
    p_c: float,
    state: DesignState,
    trace: SolverTrace | None = None,
) -> DesignState:
    """Run the pilot ADMM from `state` with p_c fixed; x_p is the repaired x2."""
    st = state.copy(p_c=float(p_c), m=0)
    if st.rho != options.rho:
        st.d = st.d * (st.rho / options.rho)
        st.rho = options.rho
    warmup = min(options.penalty_warmup, options.admm_max_iters // 2)
    prev_obj = spec.objective(p_c, st.x2)
    converged = False
    primal = dual = np.inf
    for m in range(1, options.admm_max_iters + 1):
        st.m = m
        s1, x1 = update_x1(spec, st, p_c, options)
        st.s1, st.x1 = s1, x1
        x2_prev = st.x2
        st.x2 = update_x2(spec, st, p_c, options)
        st.A = update_slack(spec, st, options)
        st.d = st.d + st.x1 - st.x2

        primal = float(np.linalg.norm(st.x1 - st.x2))
        dual = float(st.rho * np.linalg.norm(st.x2 - x2_prev))
        obj = spec.objective(p_c, st.x2)
        if trace is not None:
            trace.admm.append(
                TraceRecord(
                    n=st.n,
                    m=m,
                    objective=obj,
                    sinr=spec.sinr(p_c, st.x2),
                    isl=spec.isl(p_c, st.x2),
                    primal_residual=primal,
                    dual_residual=dual,
                    p_c=float(p_c),
                )
            )
        if primal <= options.eps_consensus and abs(obj - prev_obj) <= options.eps_obj * max(1.0, abs(obj)):
            converged = True
            break
        prev_obj = obj

        if m > warmup:
            growth = min(options.rho_growth, options.rho_max / st.rho)
            if growth > 1.0:
                st.rho *= growth
                st.d = st.d / growth
        elif options.adaptive_penalty:
            if primal > 10.0 * dual:
                st.rho *= 2.0
                st.d = st.d / 2.0
            elif dual > 10.0 * primal:
                st.rho /= 2.0
                st.d = st.d * 2.0

    if not converged:
        logger.warning(
            f"ADMM stopped after {options.admm_max_iters} iterations "
            f"(primal {primal:.3g}, dual {dual:.3g})"
        )
        get_collector().warning(
            "ADMM_NOT_CONVERGED",
            "Pilot ADMM hit its iteration limit before reaching consensus",
            stage="admm",
            ao_iteration=st.n,
            admm_iteration=st.m,
            context={"primal_residual": primal, "dual_residual": dual},
            suggestion="Raise solver.admm_max_iters or solver.rho_growth, or loosen solver.eps_consensus",
        )
    st.x_p = repair_pilots(spec, p_c, st.x2)
    st.primal_residual = primal
    st.dual_residual = dual
    return st
