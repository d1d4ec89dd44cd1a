"""Data-power subproblem: a 1-D concave maximization over p_c."""

import math
from collections.abc import Callable

import numpy as np

from ..errors import InfeasibleProblemError
from ..metrics import isl_power_coefficients, sinr_aux
from .problem import ProblemSpec

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Golden-section search for the maximum of a unimodal f on [a, b].

    Returns the midpoint of the final bracket, whose width is at most `tol`.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)

    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        if yc > yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)

    lo, hi = (a, d) if yc > yd else (c, b)
    return 0.5 * (lo + hi)


def power_interval(spec: ProblemSpec, x_p: np.ndarray) -> tuple[float, float]:
    """Feasible p_c range given the pilots: mainlobe >= xi_min and P_T <= P_max."""
    kernels = spec.kernels
    q_c = kernels.data_trace
    q_p = float(np.vdot(x_p, kernels.pilot_gram @ x_p).real)
    slack = 1e-9 * max(1.0, spec.budget)
    if q_c <= 0:
        if q_p > spec.budget + slack:
            raise InfeasibleProblemError(
                f"pilot mainlobe {q_p:.6g} exceeds the budget {spec.budget:.6g}",
                constraint="power",
            )
        if q_p < spec.xi_min - slack:
            raise InfeasibleProblemError(
                f"pilot mainlobe {q_p:.6g} is below xi_min={spec.xi_min:.6g} and there "
                "are no data cells to add power",
                constraint="mainlobe",
            )
        return 0.0, 0.0
    lo = max(0.0, (spec.xi_min - q_p) / q_c)
    hi = (spec.budget - q_p) / q_c
    if hi < -slack / q_c:
        raise InfeasibleProblemError(
            f"pilot mainlobe {q_p:.6g} alone exceeds the budget {spec.budget:.6g}",
            constraint="power",
        )
    if lo > hi + slack / q_c:
        raise InfeasibleProblemError(
            f"no data power meets xi_min={spec.xi_min:.6g} within the budget",
            constraint="mainlobe",
        )
    hi = max(hi, 0.0)
    return min(lo, hi), hi


def power_objective(spec: ProblemSpec, s1: float, x_p: np.ndarray) -> Callable:
    """eta_w sinr_aux(p_c, s1) - eta_bar_w (alpha2 p_c^2 + alpha1 p_c + alpha0), vectorized."""
    w_sinr, w_isl = spec.weights
    alpha2, alpha1, alpha0 = isl_power_coefficients(x_p, spec.kernels)
    sigma_n_sq = spec.model.sigma_n_sq

    def objective(p_c):
        p_c = np.asarray(p_c, dtype=float)
        return w_sinr * sinr_aux(p_c, s1, sigma_n_sq) - w_isl * (
            alpha2 * p_c**2 + alpha1 * p_c + alpha0
        )

    return objective


def solve_power(spec: ProblemSpec, s1: float, x_p: np.ndarray, tol: float = 1e-9) -> float:
    """Global maximizer of the concave power objective on its feasible interval."""
    lo, hi = power_interval(spec, np.asarray(x_p, dtype=complex))
    if hi - lo <= 0:
        return float(lo)
    objective = power_objective(spec, s1, x_p)
    mid = golden_section_max(lambda p: float(objective(p)), lo, hi, tol * max(1.0, hi))
    # the maximizer often sits on a constraint; endpoints are checked explicitly
    candidates = np.array([mid, lo, hi])
    return float(candidates[int(np.argmax(objective(candidates)))])
