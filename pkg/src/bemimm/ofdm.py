"""OFDM framing: constellations, unitary DFT pair and cyclic prefix.

Convention: ``[F]_{k,m} = exp(-2j*pi*k*m/N) / sqrt(N)`` so that the
time-domain samples are ``x = F^H X`` and both transforms preserve energy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "Modulation",
    "Constellation",
    "BPSK",
    "QPSK",
    "dft_matrix",
    "map_symbols",
    "demap_symbols",
    "slice_symbols",
    "ofdm_modulate",
    "ofdm_demodulate",
    "strip_cp",
    "random_bits",
]


class Modulation(enum.Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"


@dataclass(frozen=True)
class Constellation:
    """Unit-energy alphabet; ``points[i]`` carries the bit label of ``i``."""

    kind: Modulation
    points: np.ndarray
    bits_per_symbol: int

    @classmethod
    def of(cls, kind: Modulation | str) -> "Constellation":
        kind = Modulation(kind.lower()) if isinstance(kind, str) else kind
        if kind is Modulation.BPSK:
            return cls(kind, np.array([1.0 + 0j, -1.0 + 0j]), 1)
        # Gray labels: first bit -> sign of I, second bit -> sign of Q.
        s = 1 / np.sqrt(2)
        pts = np.array([s + 1j * s, s - 1j * s, -s + 1j * s, -s - 1j * s])
        return cls(kind, pts, 2)

    @property
    def size(self) -> int:
        return len(self.points)


BPSK = Constellation.of(Modulation.BPSK)
QPSK = Constellation.of(Modulation.QPSK)


def dft_matrix(N: int) -> np.ndarray:
    k = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)


def map_symbols(bits, c: Constellation) -> np.ndarray:
    """Map a bit sequence to constellation points (MSB first within a symbol)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % c.bits_per_symbol:
        raise ValueError(
            f"{bits.size} bits is not a multiple of {c.bits_per_symbol} bits/symbol"
        )
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    groups = bits.reshape(-1, c.bits_per_symbol)
    weights = 1 << np.arange(c.bits_per_symbol - 1, -1, -1)
    return c.points[groups @ weights]


def slice_symbols(z, c: Constellation) -> np.ndarray:
    """Hard decision: index of the nearest point; ties go to the lowest index."""
    z = np.asarray(z, dtype=complex)
    dist = np.abs(z[..., None] - c.points) ** 2
    return np.argmin(dist, axis=-1)


def demap_symbols(symbols, c: Constellation) -> np.ndarray:
    idx = slice_symbols(symbols, c)
    shifts = np.arange(c.bits_per_symbol - 1, -1, -1)
    return ((idx.ravel()[:, None] >> shifts) & 1).ravel()


def ofdm_modulate(X, Ng: int) -> np.ndarray:
    """Unitary IDFT of one OFDM symbol followed by a length-``Ng`` cyclic prefix."""
    X = np.asarray(X, dtype=complex)
    N = X.shape[-1]
    if not 0 <= Ng < N:
        raise ConfigError(f"cyclic prefix length Ng={Ng} must satisfy 0 <= Ng < N={N}")
    x = np.fft.ifft(X, norm="ortho")
    return np.concatenate([x[..., N - Ng:], x], axis=-1)


def strip_cp(samples, Ng: int) -> np.ndarray:
    return np.asarray(samples)[..., Ng:]


def ofdm_demodulate(y) -> np.ndarray:
    """Unitary DFT of a CP-free received symbol."""
    y = np.asarray(y, dtype=complex)
    if y.ndim == 0 or y.shape[-1] == 0:
        raise ValueError("empty OFDM symbol")
    return np.fft.fft(y, norm="ortho")


def random_bits(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.int64)
