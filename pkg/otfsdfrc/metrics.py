"""Communication and sensing metrics of a design (p_c, x_p).

SINR and capacity follow the LMMSE effective-noise model; ISL is the expected
integrated sidelobe level over a circularly-symmetric Gaussian data codebook.
The split forms take two pilot copies (x1, x2) and evaluate bilinear terms as
real parts, so they coincide with the joint forms on x1 = x2.
"""

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from more_itertools import chunked

from .channel import (
    ChannelModel,
    LinkOperators,
    PilotDictionary,
    SeedLike,
    complex_normal,
    lmmse_estimate,
    sample_taps,
)
from .grid import GridConfig, KernelSet, evaluate_af
from .utils import spawn_seeds

DRAW_CHUNK = 2048


@dataclass
class MetricReport:
    """Metrics of one design."""

    sinr: float
    isl: float
    mainlobe: float
    tx_power: float
    eta: float
    capacity_lb: float | None = None
    capacity_stderr: float | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(self)])


@dataclass
class CapacityEstimate:
    value: float
    stderr: float


# --- communication ---------------------------------------------------------


def trace_term(x_p: np.ndarray, model: ChannelModel, dictionary: PilotDictionary) -> float:
    """Tr(p sh2 (I + (p sh2 / sn2) Omega^H Omega)^-1), from the eigenvalues of the Gram."""
    eig = np.clip(np.linalg.eigvalsh(dictionary.gram(x_p)), 0.0, None)
    return float(np.sum(model.prior_variance / (1.0 + model.estimation_gain * eig)))


def sinr_aux(p_c, s1, sigma_n_sq: float):
    """(p_c / sn2) / ((p_c / sn2) s1 + 1); vectorized over p_c and s1."""
    g = np.asarray(p_c, dtype=float) / sigma_n_sq
    return g / (g * np.asarray(s1, dtype=float) + 1.0)


def sinr_aux_slope(p_c, s1, sigma_n_sq: float):
    """d sinr_aux / d s1 (never positive)."""
    g = np.asarray(p_c, dtype=float) / sigma_n_sq
    return -(g**2) / (g * np.asarray(s1, dtype=float) + 1.0) ** 2


def sinr(p_c: float, x_p: np.ndarray, model: ChannelModel, dictionary: PilotDictionary) -> float:
    return float(sinr_aux(p_c, trace_term(x_p, model, dictionary), model.sigma_n_sq))


@dataclass(frozen=True, eq=False)
class SinrContext:
    """SINR metric bound to one channel model and pilot dictionary."""

    model: ChannelModel
    dictionary: PilotDictionary

    def trace_term(self, x_p: np.ndarray) -> float:
        return trace_term(x_p, self.model, self.dictionary)

    def sinr(self, p_c: float, x_p: np.ndarray) -> float:
        return sinr(p_c, x_p, self.model, self.dictionary)

    def sinr_aux(self, p_c, s1):
        return sinr_aux(p_c, s1, self.model.sigma_n_sq)

    def effective_noise(self, p_c: float, x_p: np.ndarray) -> float:
        """Per-cell variance of estimation interference plus noise."""
        return p_c * self.trace_term(x_p) + self.model.sigma_n_sq


def capacity_samples(h_c_hat: np.ndarray, sinr_value: float, cfg: GridConfig) -> np.ndarray:
    """(f_CP / MN) log2 det(I + SINR H_c H_c^H) for each channel in a batch."""
    h = np.asarray(h_c_hat)
    if h.ndim == 2:
        h = h[None]
    k_c = h.shape[-1]
    gram = np.eye(k_c) + sinr_value * (h.conj().transpose(0, 2, 1) @ h)
    _, logdet = np.linalg.slogdet(gram)
    return cfg.f_cp / cfg.mn * logdet / np.log(2.0)


def capacity_lower_bound(
    p_c: float,
    x_p: np.ndarray,
    model: ChannelModel,
    cfg: GridConfig,
    link: LinkOperators,
    n_trials: int,
    rng_seed: SeedLike = None,
) -> CapacityEstimate:
    """Monte Carlo capacity lower bound under LMMSE channel estimates."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    dictionary = link.dictionary
    s = sinr(p_c, x_p, model, dictionary)
    if s == 0.0 or link.cc.shape[2] == 0:
        return CapacityEstimate(0.0, 0.0)
    omega = dictionary.omega(x_p)
    chunks = list(chunked(range(n_trials), DRAW_CHUNK))
    values = []
    for chunk, seed in zip(chunks, spawn_seeds(as_seed(rng_seed), len(chunks))):
        rng = np.random.default_rng(seed)
        h, _ = sample_taps(model, rng, len(chunk))
        y_p = h @ omega.T + complex_normal(rng, (len(chunk), dictionary.r_p), model.sigma_n_sq)
        h_hat = lmmse_estimate(dictionary, x_p, y_p, model)
        values.append(capacity_samples(np.einsum("da,arc->drc", h_hat, link.cc), s, cfg))
    samples = np.concatenate(values)
    stderr = float(np.std(samples, ddof=1) / np.sqrt(n_trials)) if n_trials > 1 else 0.0
    return CapacityEstimate(float(np.mean(samples)), stderr)


def as_seed(rng_seed: SeedLike) -> np.random.SeedSequence:
    """SeedSequence for spawning chunk streams from any accepted seed form."""
    if isinstance(rng_seed, np.random.SeedSequence):
        return rng_seed
    if isinstance(rng_seed, np.random.Generator):
        return np.random.SeedSequence(int(rng_seed.integers(2**63)))
    return np.random.SeedSequence(rng_seed)


# --- sensing ---------------------------------------------------------------


def _pilot_forms(x_p: np.ndarray, kernels: KernelSet) -> np.ndarray:
    """x_p^H A_p,lk x_p for every ISL bin."""
    return np.einsum("i,kij,j->k", x_p.conj(), kernels.A_p, x_p)


def isl_power_coefficients(x_p: np.ndarray, kernels: KernelSet) -> tuple[float, float, float]:
    """(alpha2, alpha1, alpha0) with isl_expected(p_c) = alpha2 p_c^2 + alpha1 p_c + alpha0."""
    x_p = np.asarray(x_p, dtype=complex)
    q = _pilot_forms(x_p, kernels)
    alpha2 = float(np.sum(kernels.a + np.abs(kernels.b) ** 2))
    cross = np.einsum("i,kij,j->k", x_p.conj(), kernels.B, x_p).real
    alpha1 = float(np.sum(cross + 2.0 * np.real(kernels.b * q.conj())))
    alpha0 = float(np.sum(np.abs(q) ** 2))
    return alpha2, alpha1, alpha0


def isl_expected(p_c: float, x_p: np.ndarray, kernels: KernelSet) -> float:
    alpha2, alpha1, alpha0 = isl_power_coefficients(x_p, kernels)
    return alpha2 * p_c**2 + alpha1 * p_c + alpha0


def isl_split(p_c: float, x1: np.ndarray, x2: np.ndarray, kernels: KernelSet) -> float:
    """ISL' with the quartic written as (x1^H A_p x2)(x2^H A_p^H x1)."""
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    q12 = np.einsum("i,kij,j->k", x1.conj(), kernels.A_p, x2)
    data = p_c**2 * np.sum(kernels.a + np.abs(kernels.b) ** 2)
    cross = p_c * np.sum(np.einsum("i,kij,j->k", x2.conj(), kernels.B, x1).real)
    mixed = 2.0 * p_c * np.sum(np.real(kernels.b * q12.conj()))
    return float(data + cross + mixed + np.sum(np.abs(q12) ** 2))


def isl_split_grad_x1(p_c: float, x1: np.ndarray, x2: np.ndarray, kernels: KernelSet) -> np.ndarray:
    """Real gradient of ISL' in x1, packed as d/dRe + j d/dIm."""
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    u = np.einsum("kij,j->ki", kernels.A_p, x2)  # A_p x2 per bin
    quartic = 2.0 * np.einsum("ki,k->i", u, np.einsum("ki,i->k", u.conj(), x1))
    linear = p_c * np.einsum("kij,j->i", kernels.B, x2) + 2.0 * p_c * np.einsum(
        "k,ki->i", kernels.b.conj(), u
    )
    return quartic + linear


def mainlobe(p_c: float, x_p: np.ndarray, kernels: KernelSet) -> float:
    """f00_bar = p_c Tr(Phi_c^H B^H B Phi_c) + x_p^H Phi_p^H B^H B Phi_p x_p."""
    x_p = np.asarray(x_p, dtype=complex)
    return float(p_c * kernels.data_trace + np.real(np.vdot(x_p, kernels.pilot_gram @ x_p)))


def mainlobe_split(p_c: float, x1: np.ndarray, x2: np.ndarray, kernels: KernelSet) -> float:
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    return float(p_c * kernels.data_trace + np.real(np.vdot(x2, kernels.pilot_gram @ x1)))


def tx_power(p_c: float, x_p: np.ndarray, kernels: KernelSet) -> float:
    return mainlobe(p_c, x_p, kernels) / kernels.cfg.frame_len


@dataclass
class EmpiricalAF:
    """Per-bin Monte Carlo averages of the cross-correlation over data draws."""

    l_hat: int
    q_hat: int
    mean_abs_f_sq: np.ndarray
    mean_f: np.ndarray
    n_draws: int

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.l_hat, self.l_hat + 1)

    @property
    def dopplers(self) -> np.ndarray:
        return np.arange(-self.q_hat, self.q_hat + 1)

    def zero_doppler_slice(self) -> np.ndarray:
        """mean |f_l0|^2 over delay bins."""
        return self.mean_abs_f_sq[:, self.q_hat]

    def zero_delay_slice(self) -> np.ndarray:
        """mean |f_0k|^2 over Doppler bins."""
        return self.mean_abs_f_sq[self.l_hat, :]

    def sidelobe_energy(self) -> float:
        mask = np.ones_like(self.mean_abs_f_sq, dtype=bool)
        mask[self.l_hat, self.q_hat] = False
        return float(np.sum(self.mean_abs_f_sq[mask]))

    def to_frame(self) -> pd.DataFrame:
        ll, kk = np.meshgrid(self.lags, self.dopplers, indexing="ij")
        return pd.DataFrame(
            {"l": ll.ravel(), "k": kk.ravel(), "mean_abs_f_sq": self.mean_abs_f_sq.ravel()}
        )

    def mean_frame(self) -> pd.DataFrame:
        ll, kk = np.meshgrid(self.lags, self.dopplers, indexing="ij")
        return pd.DataFrame(
            {
                "l": ll.ravel(),
                "k": kk.ravel(),
                "mean_f_re": self.mean_f.real.ravel(),
                "mean_f_im": self.mean_f.imag.ravel(),
            }
        )


def draw_af(
    x_p: np.ndarray, p_c: float, kernels: KernelSet, n_draws: int, rng_seed: SeedLike
):
    """Yield f_lk arrays (chunk, 2L_hat+1, 2Q_hat+1) for successive data-draw chunks."""
    placement = kernels.placement
    chunks = list(chunked(range(n_draws), DRAW_CHUNK))
    for chunk, seed in zip(chunks, spawn_seeds(as_seed(rng_seed), len(chunks))):
        rng = np.random.default_rng(seed)
        x_c = complex_normal(rng, (len(chunk), placement.k_c), p_c)
        x = placement.compose(np.broadcast_to(x_p, (len(chunk), placement.k_p)), x_c)
        yield evaluate_af(kernels.cfg, x, kernels.l_hat, kernels.q_hat)


def empirical_af(
    x_p: np.ndarray, p_c: float, kernels: KernelSet, n_draws: int, rng_seed: SeedLike = None
) -> EmpiricalAF:
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    x_p = np.asarray(x_p, dtype=complex)
    if p_c == 0.0:
        x = kernels.placement.compose(x_p, np.zeros(kernels.placement.k_c))
        f = evaluate_af(kernels.cfg, x, kernels.l_hat, kernels.q_hat)
        return EmpiricalAF(kernels.l_hat, kernels.q_hat, np.abs(f) ** 2, f, n_draws)
    sq_sums, sums = [], []
    for f in draw_af(x_p, p_c, kernels, n_draws, rng_seed):
        sq_sums.append(np.sum(np.abs(f) ** 2, axis=0))
        sums.append(np.sum(f, axis=0))
    return EmpiricalAF(
        kernels.l_hat,
        kernels.q_hat,
        np.sum(np.stack(sq_sums), axis=0) / n_draws,
        np.sum(np.stack(sums), axis=0) / n_draws,
        n_draws,
    )


def evaluate_design(
    p_c: float,
    x_p: np.ndarray,
    kernels: KernelSet,
    model: ChannelModel,
    dictionary: PilotDictionary,
    eta: float,
) -> MetricReport:
    lobe = mainlobe(p_c, x_p, kernels)
    return MetricReport(
        sinr=sinr(p_c, x_p, model, dictionary),
        isl=isl_expected(p_c, x_p, kernels),
        mainlobe=lobe,
        tx_power=lobe / kernels.cfg.frame_len,
        eta=eta,
    )
