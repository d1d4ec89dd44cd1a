"""Bernoulli-Gaussian delay-Doppler channel, pilot dictionary and LMMSE estimation."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ChannelModelError
from .grid import GridConfig, Placement, build_channel_operators, tap_pairs

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChannelModel:
    """Statistics of the sparse DD channel and the receiver noise."""

    L: int
    Q: int
    p: float
    sigma_h_sq: float
    sigma_n_sq: float

    def __post_init__(self):
        if self.L < 0 or self.Q < 0:
            raise ChannelModelError(f"L and Q must be non-negative, got L={self.L}, Q={self.Q}")
        if not 0.0 <= self.p <= 1.0:
            raise ChannelModelError(f"tap activity probability must lie in [0, 1], got {self.p}")
        if self.sigma_h_sq <= 0 or self.sigma_n_sq <= 0:
            raise ChannelModelError(
                f"variances must be positive, got sigma_h_sq={self.sigma_h_sq}, "
                f"sigma_n_sq={self.sigma_n_sq}"
            )

    @property
    def k_h(self) -> int:
        return (self.L + 1) * (self.Q + 1)

    @property
    def prior_variance(self) -> float:
        """Marginal tap variance p * sigma_h^2 used as the LMMSE prior."""
        return self.p * self.sigma_h_sq

    @property
    def estimation_gain(self) -> float:
        """p * sigma_h^2 / sigma_n^2."""
        return self.prior_variance / self.sigma_n_sq

    def with_noise(self, sigma_n_sq: float) -> "ChannelModel":
        return ChannelModel(self.L, self.Q, self.p, self.sigma_h_sq, sigma_n_sq)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One sampled channel; taps ordered (0,0), (1,0), ..., (L,0), (0,1), ..., (L,Q)."""

    h: np.ndarray
    active_mask: np.ndarray
    L: int
    Q: int

    @property
    def taps(self) -> list[tuple[int, int]]:
        return tap_pairs(self.L, self.Q)


def sample_taps(model: ChannelModel, rng: np.random.Generator, size: int | None = None):
    """Draw tap vectors (and activity masks); batched when `size` is given."""
    shape = (model.k_h,) if size is None else (size, model.k_h)
    mask = rng.random(shape) < model.p
    h = np.where(mask, complex_normal(rng, shape, model.sigma_h_sq), 0.0)
    return h, mask


def sample_channel(model: ChannelModel, rng_seed: SeedLike) -> ChannelRealization:
    h, mask = sample_taps(model, as_generator(rng_seed))
    return ChannelRealization(h=h, active_mask=mask, L=model.L, Q=model.Q)


def combine_taps(ops: np.ndarray, h: np.ndarray) -> np.ndarray:
    """sum_a h_a T_a for one tap vector or a batch of them."""
    return np.tensordot(h, ops, axes=([-1], [0]))


def effective_channel(cfg: GridConfig, realization: ChannelRealization) -> np.ndarray:
    """H_DD = (F kron I)(sum_i alpha_i Pi^l_i Delta^k_i)(F^H kron I)."""
    return combine_taps(build_channel_operators(cfg, realization.L, realization.Q), realization.h)


@dataclass(frozen=True, eq=False)
class PilotDictionary:
    """Extended pilot dictionary; `blocks[a]` is Psi_p^H T_a Phi_p (R_p x K_p)."""

    blocks: np.ndarray

    @property
    def k_h(self) -> int:
        return self.blocks.shape[0]

    @property
    def r_p(self) -> int:
        return self.blocks.shape[1]

    @property
    def k_p(self) -> int:
        return self.blocks.shape[2]

    @cached_property
    def omega_tilde(self) -> np.ndarray:
        """R_p x (K_h K_p) matrix [block_0, block_1, ...]."""
        return np.concatenate(list(self.blocks), axis=1) if self.k_h else np.zeros((self.r_p, 0))

    def omega(self, x_p: np.ndarray) -> np.ndarray:
        """Omega = Omega_tilde (I kron x_p); column a is block_a x_p."""
        return np.einsum("arp,...p->...ra", self.blocks, x_p)

    def gram(self, x_p: np.ndarray) -> np.ndarray:
        om = self.omega(x_p)
        return om.conj().T @ om


@dataclass(frozen=True, eq=False)
class LinkOperators:
    """Channel shift operators restricted to the placement's transmit/receive sets.

    Each array is (K_h, rows, cols): `pp` maps pilots to pilot receive cells,
    `cp` data to pilot receive cells, `pc` pilots to data receive cells and `cc`
    data to data receive cells.
    """

    pp: np.ndarray
    cp: np.ndarray
    pc: np.ndarray
    cc: np.ndarray

    @property
    def dictionary(self) -> PilotDictionary:
        return PilotDictionary(self.pp)


def build_link_operators(cfg: GridConfig, placement: Placement, model: ChannelModel) -> LinkOperators:
    placement.check_grid(cfg)
    ops = build_channel_operators(cfg, model.L, model.Q)
    rp, rc = list(placement.rx_pilot_indices), list(placement.rx_data_indices)
    tp, tc = list(placement.pilot_indices), list(placement.data_indices)

    def restrict(rows, cols):
        return ops[:, rows][:, :, cols]

    return LinkOperators(
        pp=restrict(rp, tp), cp=restrict(rp, tc), pc=restrict(rc, tp), cc=restrict(rc, tc)
    )


def build_pilot_dictionary(cfg: GridConfig, placement: Placement, model: ChannelModel) -> PilotDictionary:
    return build_link_operators(cfg, placement, model).dictionary


def lmmse_estimate(
    dictionary: PilotDictionary,
    x_p: np.ndarray,
    y_p: np.ndarray,
    model: ChannelModel,
) -> np.ndarray:
    """h_hat = (Omega^H Omega / sn2 + I / (p sh2))^-1 Omega^H y_p / sn2.

    `y_p` may carry leading batch axes; the normal matrix is factored once.
    """
    if model.prior_variance <= 0:
        raise ChannelModelError("LMMSE needs a positive prior variance p * sigma_h^2")
    om = dictionary.omega(x_p)
    normal = om.conj().T @ om / model.sigma_n_sq + np.eye(model.k_h) / model.prior_variance
    rhs = np.asarray(y_p) @ om.conj() / model.sigma_n_sq
    factor = cho_factor(normal)
    return cho_solve(factor, rhs.T).T


def estimated_effective_channels(
    cfg: GridConfig, placement: Placement, h_hat: np.ndarray, model: ChannelModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(H_DD_hat, Psi_c^H H_DD_hat Phi_c, Psi_p^H H_DD_hat Phi_p)."""
    placement.check_grid(cfg)
    h_dd = combine_taps(build_channel_operators(cfg, model.L, model.Q), h_hat)
    h_c = h_dd[np.ix_(list(placement.rx_data_indices), list(placement.data_indices))]
    h_p = h_dd[np.ix_(list(placement.rx_pilot_indices), list(placement.pilot_indices))]
    return h_dd, h_c, h_p
