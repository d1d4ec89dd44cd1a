"""Deterministic OTFS operators on the delay-Doppler grid.

DD-grid cells are linearized column-major over the M x N grid: index
``delay_row + M * doppler_column``. Every builder here is a pure function of
its inputs; returned arrays are marked read-only so cached results can be
shared between concurrent readers.
"""

from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any

import numpy as np
from scipy.linalg import dft

from .errors import GridError, PlacementError

NUMERICAL_ZERO = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridConfig:
    """OTFS frame geometry."""

    M: int
    N: int
    n_cp: int = 0

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise GridError(f"M and N must be positive, got M={self.M}, N={self.N}")
        if not 0 <= self.n_cp < self.mn:
            raise GridError(f"N_CP must lie in [0, MN={self.mn}), got {self.n_cp}")

    @classmethod
    def from_cp_ratio(cls, M: int, N: int, r_cp: float) -> "GridConfig":
        """Build from the CP ratio N_CP / MN."""
        return cls(M, N, int(round(r_cp * M * N)))

    @property
    def mn(self) -> int:
        return self.M * self.N

    @property
    def frame_len(self) -> int:
        return self.mn + self.n_cp

    @property
    def f_cp(self) -> float:
        return self.mn / self.frame_len

    @property
    def r_cp(self) -> float:
        return self.n_cp / self.mn

    def cell(self, index: int) -> tuple[int, int]:
        """(delay_row, doppler_column) of a linear DD index."""
        return index % self.M, index // self.M

    def index(self, delay: int, doppler: int) -> int:
        return (delay % self.M) + self.M * (doppler % self.N)


def dd_spread(cfg: GridConfig, indices: Iterable[int], L: int, Q: int) -> tuple[int, ...]:
    """Cells reachable from `indices` by every channel shift (i, j), 0<=i<=L, 0<=j<=Q.

    A delay shift moves a cell down its column (wrapping within the column) and a
    Doppler shift moves it across columns, both cyclically.
    """
    reached = set()
    for idx in indices:
        m, c = cfg.cell(idx)
        for i in range(L + 1):
            for j in range(Q + 1):
                reached.add(cfg.index(m + i, c + j))
    return tuple(sorted(reached))


@dataclass(frozen=True, eq=False)
class Placement:
    """Pilot/data/guard arrangement over the DD grid.

    The four ordered index lists define the selection matrices: the k-th column
    of Phi_p is the standard basis vector of the k-th pilot index, and likewise
    for Phi_c, Psi_p and Psi_c.
    """

    mn: int
    pilot_indices: tuple[int, ...]
    data_indices: tuple[int, ...]
    rx_pilot_indices: tuple[int, ...]
    rx_data_indices: tuple[int, ...]

    def __post_init__(self):
        for name in ("pilot_indices", "data_indices", "rx_pilot_indices", "rx_data_indices"):
            values = tuple(int(v) for v in getattr(self, name))
            object.__setattr__(self, name, values)
            if len(set(values)) != len(values):
                raise PlacementError(f"{name} contains repeated cells")
            bad = [v for v in values if not 0 <= v < self.mn]
            if bad:
                raise PlacementError(f"{name} has cells outside [0, {self.mn}): {bad[:5]}")
        overlap = set(self.pilot_indices) & set(self.data_indices)
        if overlap:
            raise PlacementError(f"pilot and data cells overlap: {sorted(overlap)[:5]}")

    @classmethod
    def with_spread(
        cls,
        cfg: GridConfig,
        pilot_indices: Sequence[int],
        data_indices: Sequence[int],
        L: int,
        Q: int,
        rx_pilot_indices: Sequence[int] | None = None,
        rx_data_indices: Sequence[int] | None = None,
    ) -> "Placement":
        """Placement whose receive sets default to each region's DD spread."""
        if rx_pilot_indices is None:
            rx_pilot_indices = dd_spread(cfg, pilot_indices, L, Q)
        if rx_data_indices is None:
            rx_data_indices = dd_spread(cfg, data_indices, L, Q)
        return cls(
            cfg.mn,
            tuple(pilot_indices),
            tuple(data_indices),
            tuple(rx_pilot_indices),
            tuple(rx_data_indices),
        )

    @property
    def k_p(self) -> int:
        return len(self.pilot_indices)

    @property
    def k_c(self) -> int:
        return len(self.data_indices)

    @property
    def r_p(self) -> int:
        return len(self.rx_pilot_indices)

    @property
    def r_c(self) -> int:
        return len(self.rx_data_indices)

    @property
    def guard_count(self) -> int:
        return self.mn - self.k_p - self.k_c

    def _selection(self, indices: tuple[int, ...]) -> np.ndarray:
        sel = np.zeros((self.mn, len(indices)))
        sel[list(indices), np.arange(len(indices))] = 1.0
        return _frozen(sel)

    @cached_property
    def phi_p(self) -> np.ndarray:
        return self._selection(self.pilot_indices)

    @cached_property
    def phi_c(self) -> np.ndarray:
        return self._selection(self.data_indices)

    @cached_property
    def psi_p(self) -> np.ndarray:
        return self._selection(self.rx_pilot_indices)

    @cached_property
    def psi_c(self) -> np.ndarray:
        return self._selection(self.rx_data_indices)

    def ratios(self, cfg: GridConfig) -> dict[str, float]:
        """Pilot ratio, guard ratio and CP ratio of this arrangement."""
        used = self.k_p + self.k_c
        return {
            "r_pilot": self.k_p / used if used else 0.0,
            "r_GI": self.guard_count / self.mn,
            "r_CP": cfg.r_cp,
        }

    def check_grid(self, cfg: GridConfig) -> None:
        if self.mn != cfg.mn:
            raise PlacementError(
                f"placement covers {self.mn} cells but the grid has MN={cfg.mn}"
            )

    def compose(self, x_p: np.ndarray, x_c: np.ndarray) -> np.ndarray:
        """x_DD = Phi_c x_c + Phi_p x_p, batched over leading axes."""
        x_p = np.asarray(x_p)
        x_c = np.asarray(x_c)
        lead = np.broadcast_shapes(x_p.shape[:-1], x_c.shape[:-1])
        x = np.zeros((*lead, self.mn), dtype=complex)
        x[..., list(self.pilot_indices)] = x_p
        x[..., list(self.data_indices)] = x_c
        return x

    def to_dict(self, cfg: GridConfig) -> dict[str, Any]:
        return {
            "M": cfg.M,
            "N": cfg.N,
            "N_CP": cfg.n_cp,
            "pilot_indices": list(self.pilot_indices),
            "data_indices": list(self.data_indices),
            "rx_pilot_indices": list(self.rx_pilot_indices),
            "rx_data_indices": list(self.rx_data_indices),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> tuple[GridConfig, "Placement"]:
        cfg = GridConfig(int(doc["M"]), int(doc["N"]), int(doc.get("N_CP", 0)))
        placement = cls(
            cfg.mn,
            tuple(doc["pilot_indices"]),
            tuple(doc["data_indices"]),
            tuple(doc["rx_pilot_indices"]),
            tuple(doc["rx_data_indices"]),
        )
        return cfg, placement


@lru_cache(maxsize=32)
def build_dft_factor(cfg: GridConfig) -> np.ndarray:
    """F_N kron I_M with F_N the unitary N-point DFT matrix."""
    f_n = dft(cfg.N, scale="sqrtn")
    return _frozen(np.kron(f_n, np.eye(cfg.M)))


@lru_cache(maxsize=32)
def build_shift_operators(cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic delay permutation Pi and Doppler phase ramp Delta on MN samples."""
    mn = cfg.mn
    pi = np.roll(np.eye(mn), 1, axis=0)
    delta = np.diag(np.exp(2j * np.pi * np.arange(mn) / mn))
    return _frozen(pi), _frozen(delta)


@lru_cache(maxsize=32)
def build_cp_matrix(cfg: GridConfig) -> np.ndarray:
    """Reduced-CP arrangement: prepend the last N_CP time samples."""
    eye = np.eye(cfg.mn)
    return _frozen(np.vstack([eye[cfg.mn - cfg.n_cp :], eye]))


def delay_matrix(frame_len: int, l: int) -> np.ndarray:
    """Linear (non-cyclic) delay J_l; negative l gives J_{|l|}^T."""
    return np.eye(frame_len, k=-l)


def doppler_phases(frame_len: int, k: int) -> np.ndarray:
    """Diagonal of D_k; D_{-k} is its conjugate."""
    return np.exp(-2j * np.pi * k * np.arange(frame_len) / frame_len)


@lru_cache(maxsize=32)
def transmit_matrix(cfg: GridConfig) -> np.ndarray:
    """B = Gamma (F_N^H kron I_M): DD symbols to CP-extended time samples."""
    return _frozen(build_cp_matrix(cfg) @ build_dft_factor(cfg).conj().T)


def tap_pairs(L: int, Q: int) -> list[tuple[int, int]]:
    """Channel taps (delay, Doppler) in dictionary order: delay-major per Doppler."""
    return [(i, j) for j in range(Q + 1) for i in range(L + 1)]


@lru_cache(maxsize=16)
def build_channel_operators(cfg: GridConfig, L: int, Q: int) -> np.ndarray:
    """Stack of T_ij = F Pi^i Delta^j F^H, shape (K_h, MN, MN), in tap order."""
    if L >= cfg.mn:
        raise GridError(f"max channel delay L={L} must be below MN={cfg.mn}")
    f = build_dft_factor(cfg)
    pi, delta = build_shift_operators(cfg)
    ops = []
    for i, j in tap_pairs(L, Q):
        shift = np.linalg.matrix_power(pi, i) * np.diag(delta)[None, :] ** j
        ops.append(f @ shift @ f.conj().T)
    return _frozen(np.stack(ops))


def to_time_domain(cfg: GridConfig, x: np.ndarray) -> np.ndarray:
    """s = Gamma (F_N^H kron I_M) x, batched over leading axes."""
    return np.asarray(x) @ transmit_matrix(cfg).T


def evaluate_af(cfg: GridConfig, x: np.ndarray, l_hat: int, q_hat: int) -> np.ndarray:
    """Cross-correlations f_lk = x^H A_lk x for all |l|<=l_hat, |k|<=q_hat.

    Works in the time domain: f_lk = sum_n s*_{n+l} s_n exp(-j2pi k n / frame_len),
    which is the quadratic form of A_lk without forming it. Returns an array of
    shape (..., 2*l_hat+1, 2*q_hat+1) indexed [l + l_hat, k + q_hat].
    """
    s = to_time_domain(cfg, x)
    length = cfg.frame_len
    n = np.arange(length)
    ks = np.arange(-q_hat, q_hat + 1)
    phases = np.exp(-2j * np.pi * np.outer(n, ks) / length)
    out = np.zeros((*s.shape[:-1], 2 * l_hat + 1, 2 * q_hat + 1), dtype=complex)
    for row, l in enumerate(range(-l_hat, l_hat + 1)):
        lo, hi = max(0, -l), min(length, length - l)
        if lo >= hi:
            continue
        prod = s[..., lo + l : hi + l].conj() * s[..., lo:hi]
        out[..., row, :] = prod @ phases[lo:hi]
    return out


@dataclass(frozen=True, eq=False)
class AFKernel:
    """Ambiguity-function kernel A_lk with its cached pilot/data reductions."""

    l: int
    k: int
    matrix: np.ndarray
    a: float
    b: complex
    B: np.ndarray
    A_p: np.ndarray
    A_pc: np.ndarray
    A_cp: np.ndarray

    def evaluate(self, x: np.ndarray) -> complex:
        return complex(np.vdot(x, self.matrix @ x))

    @property
    def is_mainlobe(self) -> bool:
        return self.l == 0 and self.k == 0


@dataclass(frozen=True, eq=False)
class KernelSet(Sequence):
    """Every AF kernel of a (grid, placement, L_hat, Q_hat) plus ISL stacks.

    `kernels` holds all (2L_hat+1)(2Q_hat+1) bins in [l, k] row-major order. The
    stacked arrays used by the ISL cover sidelobe bins only, unless
    `include_mainlobe` is set.
    """

    cfg: GridConfig
    placement: Placement
    l_hat: int
    q_hat: int
    include_mainlobe: bool
    kernels: tuple[AFKernel, ...]
    pilot_gram: np.ndarray
    data_trace: float

    def __len__(self) -> int:
        return len(self.kernels)

    def __getitem__(self, i):
        return self.kernels[i]

    def __iter__(self) -> Iterator[AFKernel]:
        return iter(self.kernels)

    def bin(self, l: int, k: int) -> AFKernel:
        return self.kernels[(l + self.l_hat) * (2 * self.q_hat + 1) + (k + self.q_hat)]

    @cached_property
    def isl_mask(self) -> np.ndarray:
        mask = np.ones((2 * self.l_hat + 1, 2 * self.q_hat + 1), dtype=bool)
        if not self.include_mainlobe:
            mask[self.l_hat, self.q_hat] = False
        return _frozen(mask)

    @cached_property
    def isl_kernels(self) -> tuple[AFKernel, ...]:
        return tuple(kn for kn, keep in zip(self.kernels, self.isl_mask.ravel()) if keep)

    @cached_property
    def A_p(self) -> np.ndarray:
        return self._stack("A_p", (self.placement.k_p, self.placement.k_p))

    @cached_property
    def B(self) -> np.ndarray:
        return self._stack("B", (self.placement.k_p, self.placement.k_p))

    @cached_property
    def a(self) -> np.ndarray:
        return _frozen(np.array([kn.a for kn in self.isl_kernels], dtype=float))

    @cached_property
    def b(self) -> np.ndarray:
        return _frozen(np.array([kn.b for kn in self.isl_kernels], dtype=complex))

    def _stack(self, attr: str, shape: tuple[int, int]) -> np.ndarray:
        if not self.isl_kernels:
            return _frozen(np.zeros((0, *shape), dtype=complex))
        return _frozen(np.stack([getattr(kn, attr) for kn in self.isl_kernels]))


def _reduce_kernel(l: int, k: int, A: np.ndarray, placement: Placement) -> AFKernel:
    p = list(placement.pilot_indices)
    d = list(placement.data_indices)
    a_cc = A[np.ix_(d, d)]
    a_pc = A[np.ix_(d, p)].conj().T  # Phi_p^H A^H Phi_c
    a_cp = A[np.ix_(p, d)].conj().T  # Phi_c^H A^H Phi_p
    B = a_pc @ a_pc.conj().T + a_cp.conj().T @ a_cp
    return AFKernel(
        l=l,
        k=k,
        matrix=_frozen(A),
        a=float(np.sum(np.abs(a_cc) ** 2)),
        b=complex(np.trace(a_cc)),
        B=_frozen(0.5 * (B + B.conj().T)),
        A_p=_frozen(A[np.ix_(p, p)]),
        A_pc=_frozen(a_pc),
        A_cp=_frozen(a_cp),
    )


def build_delay_doppler_kernels(
    cfg: GridConfig,
    placement: Placement,
    l_hat: int,
    q_hat: int,
    include_mainlobe: bool = False,
) -> KernelSet:
    """A_lk = (F kron I) Gamma^H J_l D_k Gamma (F^H kron I) for every sensing bin."""
    placement.check_grid(cfg)
    if not 0 <= l_hat < cfg.frame_len:
        raise GridError(f"L_hat={l_hat} must lie in [0, frame_len={cfg.frame_len})")
    if q_hat < 0:
        raise GridError(f"Q_hat must be non-negative, got {q_hat}")

    b_mat = transmit_matrix(cfg)
    b_herm = b_mat.conj().T
    kernels = []
    for l in range(-l_hat, l_hat + 1):
        j_l = delay_matrix(cfg.frame_len, l)
        for k in range(-q_hat, q_hat + 1):
            shifted = j_l * doppler_phases(cfg.frame_len, k)[None, :]
            kernels.append(_reduce_kernel(l, k, b_herm @ shifted @ b_mat, placement))

    gram = b_herm @ b_mat
    p = list(placement.pilot_indices)
    d = list(placement.data_indices)
    return KernelSet(
        cfg=cfg,
        placement=placement,
        l_hat=l_hat,
        q_hat=q_hat,
        include_mainlobe=include_mainlobe,
        kernels=tuple(kernels),
        pilot_gram=_frozen(gram[np.ix_(p, p)].copy()),
        data_trace=float(np.real(np.trace(gram[np.ix_(d, d)]))),
    )


@dataclass
class GuardReport:
    """Outcome of a guard check: `ok` plus every (i, j, rx_cell, tx_cell) leak."""

    ok: bool
    violations: list[tuple[int, int, int, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def validate_guard(cfg: GridConfig, placement: Placement, L: int, Q: int) -> GuardReport:
    """Check that no channel shift leaks pilots into data receive cells or back."""
    placement.check_grid(cfg)
    violations: list[tuple[int, int, int, int]] = []
    if placement.k_p == 0 and placement.k_c == 0:
        return GuardReport(True)
    ops = build_channel_operators(cfg, L, Q)
    blocks = (
        (placement.rx_data_indices, placement.pilot_indices),
        (placement.rx_pilot_indices, placement.data_indices),
    )
    for (i, j), op in zip(tap_pairs(L, Q), ops):
        for rx, tx in blocks:
            if not rx or not tx:
                continue
            sub = op[np.ix_(list(rx), list(tx))]
            for r, c in zip(*np.nonzero(np.abs(sub) > NUMERICAL_ZERO)):
                violations.append((i, j, rx[r], tx[c]))
    return GuardReport(not violations, violations)
