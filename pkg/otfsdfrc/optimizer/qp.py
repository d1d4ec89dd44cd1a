"""Convex quadratic programs over one real slab constraint.

Both ADMM pilot blocks reduce to

    minimize   x^H P x - 2 Re(q^H x) + const
    subject to lo <= Re(c^H x) <= hi

with P Hermitian positive definite. `solve_kkt` solves it in closed form;
`solve_projected_gradient` is an accelerated first-order method used as an
independent cross-check.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigvalsh

ZERO_NORM = 1e-300


class EmptySlabError(ValueError):
    """The slab constraint admits no point (its normal vector vanished)."""


@dataclass(frozen=True, eq=False)
class SlabQP:
    P: np.ndarray
    q: np.ndarray
    c: np.ndarray
    lo: float
    hi: float
    const: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return float(np.real(np.vdot(x, self.P @ x)) - 2.0 * np.real(np.vdot(self.q, x)) + self.const)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.P @ x - self.q)

    def constraint(self, x: np.ndarray) -> float:
        return float(np.real(np.vdot(self.c, x)))

    @property
    def degenerate(self) -> bool:
        return float(np.vdot(self.c, self.c).real) <= ZERO_NORM

    def check_nonempty(self) -> None:
        if self.lo > self.hi or (self.degenerate and not self.lo <= 0.0 <= self.hi):
            raise EmptySlabError(
                f"slab [{self.lo:.6g}, {self.hi:.6g}] is empty for normal of norm "
                f"{np.linalg.norm(self.c):.3g}"
            )

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the slab."""
        if self.degenerate:
            return x
        t = self.constraint(x)
        target = min(max(t, self.lo), self.hi)
        if target == t:
            return x
        return x + (target - t) * self.c / float(np.vdot(self.c, self.c).real)


def _factor(P: np.ndarray):
    try:
        return cho_factor(P)
    except LinAlgError:
        jitter = 1e-12 * max(1.0, float(np.real(np.trace(P))))
        return cho_factor(P + jitter * np.eye(P.shape[0]))


def solve_kkt(qp: SlabQP) -> np.ndarray:
    """Closed-form minimizer: unconstrained optimum, else the active slab face."""
    qp.check_nonempty()
    factor = _factor(qp.P)
    x0 = cho_solve(factor, qp.q)
    if qp.degenerate:
        return x0
    t0 = qp.constraint(x0)
    if qp.lo <= t0 <= qp.hi:
        return x0
    beta = min(max(t0, qp.lo), qp.hi)
    w = cho_solve(factor, qp.c)
    return x0 + (beta - t0) / float(np.vdot(qp.c, w).real) * w


def solve_projected_gradient(
    qp: SlabQP,
    x0: np.ndarray | None = None,
    max_iters: int = 20000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Accelerated projected gradient with step 1/L and restart on objective increase."""
    qp.check_nonempty()
    lipschitz = 2.0 * float(eigvalsh(qp.P)[-1])
    step = 1.0 / lipschitz
    x = qp.project(np.zeros_like(qp.q) if x0 is None else np.asarray(x0, dtype=complex))
    y = x
    t = 1.0
    f_x = qp.value(x)
    for _ in range(max_iters):
        x_new = qp.project(y - step * qp.gradient(y))
        f_new = qp.value(x_new)
        if f_new > f_x:
            x_new = qp.project(x - step * qp.gradient(x))
            f_new = qp.value(x_new)
            moved = np.linalg.norm(x_new - x)
            y, t = x_new, 1.0
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            moved = np.linalg.norm(x_new - x)
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x, f_x = x_new, f_new
        if moved <= tol * (1.0 + np.linalg.norm(x)):
            break
    return x

