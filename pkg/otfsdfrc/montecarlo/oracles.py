"""Simulation oracles for the analytic ISL, SINR and estimation-error metrics."""

from dataclasses import dataclass

import numpy as np
from more_itertools import chunked

from ..channel import (
    ChannelModel,
    LinkOperators,
    PilotDictionary,
    SeedLike,
    complex_normal,
    lmmse_estimate,
    sample_taps,
)
from ..grid import KernelSet
from ..metrics import DRAW_CHUNK, as_seed, draw_af
from ..utils import spawn_seeds

MIN_DRAWS = 100


@dataclass
class OracleEstimate:
    mean: float
    stderr: float
    n: int


def _check_draws(n: int, what: str) -> None:
    if n < MIN_DRAWS:
        raise ValueError(f"{what} must be at least {MIN_DRAWS}, got {n}")


def _estimate(samples: np.ndarray) -> OracleEstimate:
    n = samples.size
    stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return OracleEstimate(float(np.mean(samples)), stderr, n)


def oracle_isl(
    p_c: float, x_p: np.ndarray, kernels: KernelSet, n_draws: int, rng_seed: SeedLike = None
) -> OracleEstimate:
    """Monte Carlo mean of the sidelobe energy with x_c ~ CN(0, p_c I)."""
    _check_draws(n_draws, "n_draws")
    mask = kernels.isl_mask
    x_p = np.asarray(x_p, dtype=complex)
    if p_c == 0.0:
        f = next(draw_af(x_p, 0.0, kernels, 1, rng_seed))[0]
        return OracleEstimate(float(np.sum(np.abs(f[mask]) ** 2)), 0.0, n_draws)
    samples = [
        np.sum(np.abs(f[:, mask]) ** 2, axis=-1) for f in draw_af(x_p, p_c, kernels, n_draws, rng_seed)
    ]
    return _estimate(np.concatenate(samples))


def _trial_batches(n_trials: int, rng_seed: SeedLike):
    chunks = list(chunked(range(n_trials), DRAW_CHUNK))
    for chunk, seed in zip(chunks, spawn_seeds(as_seed(rng_seed), len(chunks))):
        yield len(chunk), np.random.default_rng(seed)


def oracle_estimation_mse(
    x_p: np.ndarray,
    dictionary: PilotDictionary,
    model: ChannelModel,
    n_trials: int,
    rng_seed: SeedLike = None,
) -> OracleEstimate:
    """Monte Carlo E||h - h_hat||^2 of the LMMSE estimator (compare with trace_term)."""
    _check_draws(n_trials, "n_trials")
    omega = dictionary.omega(np.asarray(x_p, dtype=complex))
    errors = []
    for size, rng in _trial_batches(n_trials, rng_seed):
        h, _ = sample_taps(model, rng, size)
        y_p = h @ omega.T + complex_normal(rng, (size, dictionary.r_p), model.sigma_n_sq)
        h_hat = lmmse_estimate(dictionary, x_p, y_p, model)
        errors.append(np.sum(np.abs(h - h_hat) ** 2, axis=-1))
    return _estimate(np.concatenate(errors))


def oracle_sinr(
    p_c: float,
    x_p: np.ndarray,
    link: LinkOperators,
    model: ChannelModel,
    n_trials: int,
    rng_seed: SeedLike = None,
    perfect_csi: bool = False,
) -> OracleEstimate:
    """Empirical p_c R_c / E||(H_c - H_c_hat) x_c + n_c||^2 with a delta-method stderr."""
    _check_draws(n_trials, "n_trials")
    x_p = np.asarray(x_p, dtype=complex)
    dictionary = link.dictionary
    omega = dictionary.omega(x_p)
    k_c, r_c = link.cc.shape[2], link.cc.shape[1]
    if r_c == 0 or p_c <= 0:
        return OracleEstimate(0.0, 0.0, n_trials)
    energies = []
    for size, rng in _trial_batches(n_trials, rng_seed):
        h, _ = sample_taps(model, rng, size)
        y_p = h @ omega.T + complex_normal(rng, (size, dictionary.r_p), model.sigma_n_sq)
        error = np.zeros_like(h) if perfect_csi else h - lmmse_estimate(dictionary, x_p, y_p, model)
        x_c = complex_normal(rng, (size, k_c), p_c)
        v = np.einsum("da,arc,dc->dr", error, link.cc, x_c)
        v += complex_normal(rng, (size, r_c), model.sigma_n_sq)
        energies.append(np.sum(np.abs(v) ** 2, axis=-1))
    energy = _estimate(np.concatenate(energies))
    value = p_c * r_c / energy.mean
    return OracleEstimate(value, p_c * r_c * energy.stderr / energy.mean**2, n_trials)
