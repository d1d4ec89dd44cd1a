"""Problem definition, solver options, iterate state and trace records."""

from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from ..channel import ChannelModel, PilotDictionary
from ..diagnostics import get_collector
from ..errors import InfeasibleProblemError
from ..grid import GridConfig, KernelSet, Placement
from ..metrics import isl_expected, mainlobe, sinr, trace_term


class SlackCoupling(str, Enum):
    """How the SINR slack s1 >= Tr(p sh2 A) couples the pilots to the slack A."""

    DEFERRED = "deferred"
    PROJECTED = "projected"
    LINEARIZED = "linearized"


class QpSolver(str, Enum):
    KKT = "kkt"
    PROJECTED_GRADIENT = "projected_gradient"


INIT_PATTERNS = ("spike", "flat", "cluster", "custom")


@dataclass
class SolverOptions:
    rho: float = 1.0
    zeta: float = 1.0
    ao_max_iters: int = 30
    admm_max_iters: int = 500
    sca_max_iters: int = 5
    eps_obj: float = 1e-6
    eps_consensus: float = 1e-6
    eps_power_1d: float = 1e-9
    init_pattern: str = "spike"
    init_pilot_share: float | str | None = None
    adaptive_penalty: bool = True
    penalty_warmup: int = 100
    rho_growth: float = 1.5
    rho_max: float = 1e8
    slack_coupling: SlackCoupling = SlackCoupling.LINEARIZED
    qp_solver: QpSolver = QpSolver.KKT
    qp_max_iters: int = 20000
    qp_tol: float = 1e-12
    multistart: bool = False

    def __post_init__(self):
        self.slack_coupling = SlackCoupling(self.slack_coupling)
        self.qp_solver = QpSolver(self.qp_solver)
        positive = ("rho", "rho_max", "ao_max_iters", "admm_max_iters", "sca_max_iters",
                    "penalty_warmup", "eps_obj", "eps_consensus", "eps_power_1d", "qp_max_iters", "qp_tol")
        bad = [name for name in positive if not getattr(self, name) > 0]
        if self.zeta < 0:
            bad.append("zeta")
        if self.rho_growth < 1.0:
            bad.append("rho_growth")
        if bad:
            raise ValueError(f"solver options out of range: {', '.join(bad)}")
        if self.init_pattern not in INIT_PATTERNS:
            raise ValueError(
                f"unknown initial pattern '{self.init_pattern}', expected one of {INIT_PATTERNS}"
            )
        share = self.init_pilot_share
        if isinstance(share, str) and share != "auto":
            raise ValueError(f"init_pilot_share must be a number or 'auto', got '{share}'")
        if isinstance(share, float | int) and not 0.0 <= share <= 1.0:
            raise ValueError("init_pilot_share must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slack_coupling"] = self.slack_coupling.value
        d["qp_solver"] = self.qp_solver.value
        return d


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Weighted design problem: maximize eta SINR_norm - (1 - eta) ISL_norm.

    `sinr_scale` and `isl_scale` normalize the two metrics; when left unset the
    solver resolves them from the initial design.
    """

    eta: float
    p_max: float
    xi_min: float
    kernels: KernelSet
    model: ChannelModel
    dictionary: PilotDictionary
    sinr_scale: float | None = None
    isl_scale: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.p_max <= 0:
            raise ValueError(f"P_max must be positive, got {self.p_max}")
        if self.xi_min < 0:
            raise ValueError(f"xi_min must be non-negative, got {self.xi_min}")
        if self.xi_min > self.budget:
            raise InfeasibleProblemError(
                f"mainlobe requirement xi_min={self.xi_min:.6g} exceeds the power budget "
                f"(MN+N_CP) P_max={self.budget:.6g}",
                constraint="mainlobe",
            )
        for name in ("sinr_scale", "isl_scale"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")

    @property
    def cfg(self) -> GridConfig:
        return self.kernels.cfg

    @property
    def placement(self) -> Placement:
        return self.kernels.placement

    @property
    def budget(self) -> float:
        """Largest admissible mainlobe, (MN+N_CP) P_max."""
        return self.kernels.cfg.frame_len * self.p_max

    @property
    def eta_bar(self) -> float:
        return 1.0 - self.eta

    @property
    def weights(self) -> tuple[float, float]:
        """(SINR weight, ISL weight) after normalization."""
        return self.eta / (self.sinr_scale or 1.0), self.eta_bar / (self.isl_scale or 1.0)

    def with_scales(self, sinr_scale: float | None, isl_scale: float | None) -> "ProblemSpec":
        return replace(self, sinr_scale=sinr_scale, isl_scale=isl_scale)

    def with_eta(self, eta: float) -> "ProblemSpec":
        return replace(self, eta=eta)

    def sinr(self, p_c: float, x_p: np.ndarray) -> float:
        return sinr(p_c, x_p, self.model, self.dictionary)

    def isl(self, p_c: float, x_p: np.ndarray) -> float:
        return isl_expected(p_c, x_p, self.kernels)

    def trace_term(self, x_p: np.ndarray) -> float:
        return trace_term(x_p, self.model, self.dictionary)

    def objective(self, p_c: float, x_p: np.ndarray) -> float:
        w_sinr, w_isl = self.weights
        return w_sinr * self.sinr(p_c, x_p) - w_isl * self.isl(p_c, x_p)


def xi_matrix(spec: ProblemSpec, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Xi = I + (p sh2 / sn2) Omega(x2)^H Omega(x1); Hermitian PD when x1 = x2."""
    om1 = spec.dictionary.omega(x1)
    om2 = spec.dictionary.omega(x2)
    return np.eye(spec.model.k_h) + spec.model.estimation_gain * (om2.conj().T @ om1)


@dataclass
class DesignState:
    """Current design plus the ADMM auxiliaries of the pilot subproblem."""

    p_c: float
    x_p: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    A: np.ndarray
    d: np.ndarray
    s1: float
    rho: float
    zeta: float = 1.0
    n: int = 0
    m: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")

    @classmethod
    def initial(
        cls, spec: ProblemSpec, p_c: float, x_p: np.ndarray, rho: float, zeta: float = 1.0
    ) -> "DesignState":
        """Consistent ADMM start: x1 = x2 = x_p, d = 0, A = Xi^-1, s1 = trace term."""
        x_p = np.asarray(x_p, dtype=complex).copy()
        xi = xi_matrix(spec, x_p, x_p)
        return cls(
            p_c=float(p_c),
            x_p=x_p,
            x1=x_p.copy(),
            x2=x_p.copy(),
            A=np.linalg.inv(xi),
            d=np.zeros_like(x_p),
            s1=spec.trace_term(x_p),
            rho=rho,
            zeta=zeta,
        )

    def copy(self, **changes) -> "DesignState":
        state = replace(self, **changes)
        for name in ("x_p", "x1", "x2", "A", "d"):
            if name not in changes:
                setattr(state, name, getattr(self, name).copy())
        return state


@dataclass
class TraceRecord:
    n: int
    m: int
    objective: float
    sinr: float
    isl: float
    primal_residual: float
    dual_residual: float
    p_c: float


@dataclass
class SolverTrace:
    """Accepted AO iterates (`outer`) and every ADMM iteration (`admm`)."""

    outer: list[TraceRecord] = field(default_factory=list)
    admm: list[TraceRecord] = field(default_factory=list)

    @staticmethod
    def _frame(records: list[TraceRecord]) -> pd.DataFrame:
        columns = list(TraceRecord.__dataclass_fields__)
        return pd.DataFrame([asdict(r) for r in records], columns=columns)

    def outer_frame(self) -> pd.DataFrame:
        return self._frame(self.outer)

    def admm_frame(self) -> pd.DataFrame:
        return self._frame(self.admm)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.outer])

    def write_csv(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        paths = [out_dir / "trace.csv", out_dir / "admm_trace.csv"]
        self.outer_frame().to_csv(paths[0], index=False)
        self.admm_frame().to_csv(paths[1], index=False)
        return paths


def restore_feasibility(spec: ProblemSpec, p_c: float, x_p: np.ndarray) -> tuple[float, np.ndarray]:
    """Scale a start point onto the feasible set.

    Pilots are scaled by the smallest factor meeting the mainlobe requirement;
    a design over the power budget is then shrunk uniformly.
    """
    kernels = spec.kernels
    x_p = np.asarray(x_p, dtype=complex).copy()
    lobe = mainlobe(p_c, x_p, kernels)
    restored = False
    if lobe < spec.xi_min:
        q_p = lobe - p_c * kernels.data_trace
        if q_p > 0:
            x_p *= np.sqrt((spec.xi_min - p_c * kernels.data_trace) / q_p)
        elif kernels.data_trace > 0:
            p_c = spec.xi_min / kernels.data_trace
        else:
            raise InfeasibleProblemError(
                "the design carries neither pilot nor data energy", constraint="mainlobe"
            )
        restored = True
    lobe = mainlobe(p_c, x_p, kernels)
    if lobe > spec.budget:
        shrink = spec.budget / lobe
        p_c *= shrink
        x_p *= np.sqrt(shrink)
        restored = True
    if restored:
        logger.warning(
            f"Start point restored to feasibility: mainlobe {lobe:.6g} -> "
            f"{mainlobe(p_c, x_p, kernels):.6g} (xi_min={spec.xi_min:.6g}, budget={spec.budget:.6g})"
        )
        get_collector().warning(
            "FEASIBILITY_RESTORED",
            "Initial design rescaled to satisfy the mainlobe and power constraints",
            stage="optimize",
            context={"p_c": float(p_c), "pilot_energy": float(np.vdot(x_p, x_p).real)},
        )
    return float(p_c), x_p


def repair_pilots(spec: ProblemSpec, p_c: float, x_p: np.ndarray) -> np.ndarray:
    """Rescale pilots (p_c fixed) so both constraints hold exactly."""
    kernels = spec.kernels
    x_p = np.asarray(x_p, dtype=complex)
    q_p = float(np.vdot(x_p, kernels.pilot_gram @ x_p).real)
    data_part = p_c * kernels.data_trace
    lo, hi = spec.xi_min - data_part, spec.budget - data_part
    if q_p <= 0:
        return x_p
    target = min(max(q_p, lo), hi)
    return x_p * np.sqrt(max(target, 0.0) / q_p)
