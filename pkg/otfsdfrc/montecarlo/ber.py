"""Uncoded link-level BER simulation under LMMSE channel estimates."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from loguru import logger
from more_itertools import chunked
from scipy.stats import binomtest
from tqdm import tqdm

from ..channel import (
    ChannelModel,
    ChannelRealization,
    LinkOperators,
    build_link_operators,
    complex_normal,
    lmmse_estimate,
    sample_taps,
)
from ..grid import GridConfig, Placement, build_channel_operators
from ..metrics import trace_term
from ..utils import db_to_linear, max_workers, spawn_seeds
from .modulation import Constellation, Modulation

CONFIDENCE = 0.95


@dataclass
class BerConfig:
    snr_grid_db: list[float]
    modulation: Modulation = Modulation.QPSK
    n_trials: int = 1000
    seed: int = 0
    equalizer: str = "lmmse"
    perfect_csi: bool = False
    chunk_size: int = 256

    def __post_init__(self):
        self.modulation = Modulation(self.modulation)
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be at least 1, got {self.n_trials}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be at least 1, got {self.chunk_size}")
        if self.equalizer != "lmmse":
            raise ValueError(f"only the 'lmmse' equalizer is supported, got '{self.equalizer}'")
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must name at least one SNR point")


@dataclass
class BerResult:
    """Bit error counts per SNR point with Wilson confidence intervals."""

    snr_db: np.ndarray
    bit_errors: np.ndarray
    n_bits: np.ndarray
    modulation: Modulation = Modulation.QPSK
    scheme: str = ""
    confidence: float = CONFIDENCE
    _ci: np.ndarray | None = field(default=None, repr=False)

    @property
    def ber(self) -> np.ndarray:
        return self.bit_errors / self.n_bits

    @property
    def ci(self) -> np.ndarray:
        """(n_snr, 2) interval bounds."""
        if self._ci is None:
            bounds = []
            for k, n in zip(self.bit_errors, self.n_bits):
                interval = binomtest(int(k), int(n)).proportion_ci(self.confidence, method="wilson")
                bounds.append((interval.low, interval.high))
            self._ci = np.array(bounds)
        return self._ci

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "snr_db": self.snr_db,
                "ber": self.ber,
                "ci_low": self.ci[:, 0],
                "ci_high": self.ci[:, 1],
                "n_bits": self.n_bits,
            }
        )


@dataclass(frozen=True, eq=False)
class _Link:
    """Everything one worker needs to simulate frames at one SNR point."""

    ops: np.ndarray
    link: LinkOperators
    placement: Placement
    model: ChannelModel
    p_c: float
    x_p: np.ndarray
    constellation: Constellation
    perfect_csi: bool
    fixed_h: np.ndarray | None


def _simulate_frames(link: _Link, n_frames: int, seed: np.random.SeedSequence) -> int:
    """Bit errors over `n_frames` frames."""
    rng = np.random.default_rng(seed)
    placement, model = link.placement, link.model
    k = link.constellation.bits_per_symbol

    if link.fixed_h is None:
        h, _ = sample_taps(model, rng, n_frames)
    else:
        h = np.broadcast_to(link.fixed_h, (n_frames, model.k_h))
    bits = rng.integers(0, 2, size=(n_frames, placement.k_c * k))
    x_c = link.constellation.modulate(bits, link.p_c)
    x = placement.compose(np.broadcast_to(link.x_p, (n_frames, placement.k_p)), x_c)

    y = np.einsum("fa,fai->fi", h, np.einsum("aij,fj->fai", link.ops, x))
    y += complex_normal(rng, y.shape, model.sigma_n_sq)
    y_p = y[:, list(placement.rx_pilot_indices)]
    y_c = y[:, list(placement.rx_data_indices)]

    if link.perfect_csi:
        h_hat = h
        noise = model.sigma_n_sq
    else:
        h_hat = lmmse_estimate(link.link.dictionary, link.x_p, y_p, model)
        noise = link.p_c * trace_term(link.x_p, model, link.link.dictionary) + model.sigma_n_sq

    h_c = np.einsum("fa,arc->frc", h_hat, link.link.cc)
    h_c_herm = h_c.conj().transpose(0, 2, 1)
    gram = h_c_herm @ h_c + (noise / link.p_c) * np.eye(placement.k_c)
    z = np.linalg.solve(gram, (h_c_herm @ y_c[..., None]))[..., 0]
    bias = np.einsum("fii->fi", np.linalg.solve(gram, h_c_herm @ h_c)).real
    z = np.where(bias > 1e-12, z / np.where(bias > 1e-12, bias, 1.0), z)

    bits_hat = link.constellation.demodulate(z, link.p_c)
    return int(np.count_nonzero(bits_hat != bits))


def _run_chunk(args: tuple[_Link, int, np.random.SeedSequence]) -> int:
    return _simulate_frames(*args)


def run_ber(
    p_c: float,
    x_p: np.ndarray,
    cfg: GridConfig,
    placement: Placement,
    model: ChannelModel,
    ber_cfg: BerConfig,
    channel: ChannelRealization | None = None,
    scheme: str = "",
    workers: int | None = None,
    progress: bool = False,
) -> BerResult:
    """BER versus SNR = p_c / sigma_n^2 for the design (p_c, x_p).

    `model.sigma_n_sq` is replaced at every SNR point. A fixed `channel`
    replaces the random draws.
    """
    if p_c <= 0 or placement.k_c == 0:
        raise ValueError("BER simulation needs data cells carrying positive power")
    x_p = np.asarray(x_p, dtype=complex)
    constellation = Constellation(ber_cfg.modulation)
    ops = build_channel_operators(cfg, model.L, model.Q)
    link_ops = build_link_operators(cfg, placement, model)
    fixed_h = None if channel is None else np.asarray(channel.h, dtype=complex)

    tasks = []
    snr_seeds = spawn_seeds(ber_cfg.seed, len(ber_cfg.snr_grid_db))
    for snr_db, snr_seed in zip(ber_cfg.snr_grid_db, snr_seeds):
        noisy = model.with_noise(p_c / float(db_to_linear(snr_db)))
        link = _Link(ops, link_ops, placement, noisy, p_c, x_p, constellation, ber_cfg.perfect_csi, fixed_h)
        chunks = list(chunked(range(ber_cfg.n_trials), ber_cfg.chunk_size))
        tasks.extend((link, len(c), s) for c, s in zip(chunks, snr_seed.spawn(len(chunks))))

    n_chunks = len(tasks) // len(ber_cfg.snr_grid_db)
    n_workers = max_workers(workers)
    logger.info(
        f"BER {scheme or 'design'}: {len(ber_cfg.snr_grid_db)} SNR points x {ber_cfg.n_trials} "
        f"frames ({ber_cfg.modulation.value}, {n_workers} workers)"
    )
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as executor:
            counts = list(
                tqdm(executor.map(_run_chunk, tasks), total=len(tasks), disable=not progress, desc="BER")
            )
    else:
        counts = [_run_chunk(t) for t in tqdm(tasks, disable=not progress, desc="BER")]

    errors = np.array(counts, dtype=np.int64).reshape(len(ber_cfg.snr_grid_db), n_chunks).sum(axis=1)
    n_bits = np.full(errors.shape, ber_cfg.n_trials * placement.k_c * constellation.bits_per_symbol)
    return BerResult(
        snr_db=np.asarray(ber_cfg.snr_grid_db, dtype=float),
        bit_errors=errors,
        n_bits=n_bits,
        modulation=ber_cfg.modulation,
        scheme=scheme,
    )


def theoretical_ber(modulation: Modulation | str, snr_db: np.ndarray) -> np.ndarray:
    """AWGN reference curve for the given constellation."""
    return Constellation.from_name(modulation).theoretical_ber(db_to_linear(snr_db))
