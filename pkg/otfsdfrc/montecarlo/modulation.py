"""Gray-mapped square QAM constellations (QPSK, 16-QAM) with hard demapping."""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy.special import erfc


class Modulation(str, Enum):
    QPSK = "QPSK"
    QAM16 = "16QAM"


BITS_PER_SYMBOL = {Modulation.QPSK: 2, Modulation.QAM16: 4}


def gray(n: np.ndarray | int) -> np.ndarray:
    n = np.asarray(n)
    return n ^ (n >> 1)


def qfunc(x: np.ndarray | float) -> np.ndarray:
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


@dataclass(frozen=True)
class Constellation:
    """Square QAM with per-axis Gray-coded PAM and unit average symbol energy.

    A symbol label carries its high bits on the in-phase axis and its low bits
    on the quadrature axis.
    """

    modulation: Modulation

    @classmethod
    def from_name(cls, name: str | Modulation) -> "Constellation":
        try:
            return cls(Modulation(name))
        except ValueError:
            raise ValueError(
                f"unknown modulation '{name}', expected one of {[m.value for m in Modulation]}"
            ) from None

    @property
    def bits_per_symbol(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    @property
    def axis_bits(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def size(self) -> int:
        return 2**self.bits_per_symbol

    @cached_property
    def _levels(self) -> np.ndarray:
        n = 2**self.axis_bits
        return 2.0 * np.arange(n) - (n - 1)

    @cached_property
    def _scale(self) -> float:
        """Amplitude normalization so the mean of |s|^2 over the alphabet is 1."""
        return float(np.sqrt(2.0 * np.mean(self._levels**2)))

    @cached_property
    def points(self) -> np.ndarray:
        """Alphabet indexed by label."""
        n = 2**self.axis_bits
        pts = np.zeros(self.size, dtype=complex)
        for i in range(n):
            for q in range(n):
                label = (int(gray(i)) << self.axis_bits) | int(gray(q))
                pts[label] = self._levels[i] + 1j * self._levels[q]
        return pts / self._scale

    def bits_to_labels(self, bits: np.ndarray) -> np.ndarray:
        k = self.bits_per_symbol
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape[-1] % k:
            raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {k}")
        grouped = bits.reshape(*bits.shape[:-1], -1, k)
        return grouped @ (1 << np.arange(k - 1, -1, -1))

    def labels_to_bits(self, labels: np.ndarray) -> np.ndarray:
        k = self.bits_per_symbol
        labels = np.asarray(labels, dtype=np.int64)
        bits = (labels[..., None] >> np.arange(k - 1, -1, -1)) & 1
        return bits.reshape(*labels.shape[:-1], -1)

    def modulate(self, bits: np.ndarray, power: float = 1.0) -> np.ndarray:
        """Map bits (..., n_symbols * k) to symbols of average energy `power`."""
        return np.sqrt(power) * self.points[self.bits_to_labels(bits)]

    def _slice_axis(self, values: np.ndarray) -> np.ndarray:
        n = 2**self.axis_bits
        index = np.clip(np.rint((values * self._scale + (n - 1)) / 2.0), 0, n - 1).astype(np.int64)
        return gray(index)

    def demodulate(self, symbols: np.ndarray, power: float = 1.0) -> np.ndarray:
        """Hard minimum-distance demapping back to bits."""
        symbols = np.asarray(symbols) / np.sqrt(power)
        labels = (self._slice_axis(symbols.real) << self.axis_bits) | self._slice_axis(symbols.imag)
        return self.labels_to_bits(labels)

    def theoretical_ber(self, snr: np.ndarray | float) -> np.ndarray:
        """Gray-coded AWGN bit error rate at symbol SNR Es/N0 (linear)."""
        snr = np.asarray(snr, dtype=float)
        if self.modulation is Modulation.QPSK:
            return qfunc(np.sqrt(snr))
        m = self.size
        return (4.0 / self.bits_per_symbol) * (1.0 - 1.0 / np.sqrt(m)) * qfunc(
            np.sqrt(3.0 * snr / (m - 1))
        )
