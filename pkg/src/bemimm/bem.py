"""Complex-exponential basis expansion of per-symbol tap trajectories.

Each tap's N samples inside one OFDM symbol are written as ``h = B c`` where
the columns of ``B`` are DFT vectors at a few integer frequencies. The stacked
coefficient vector for all taps is ``c = [c_0; c_1; ...; c_{L-1}]``, so entry
``l*Nc + d`` belongs to tap ``l`` and basis column ``d``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "BasisKind",
    "BemBasis",
    "make_basis",
    "concat_bases",
    "project_taps",
    "reconstruct_taps",
    "coeff_correlation",
    "build_measurement_matrix",
]


class BasisKind(enum.Enum):
    LOW = "low"
    HIGH = "high"
    CONCAT = "concat"


@dataclass(frozen=True, eq=False)
class BemBasis:
    kind: BasisKind
    N: int
    freq_indices: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    @classmethod
    def from_frequencies(cls, kind: BasisKind, N: int, freqs) -> "BemBasis":
        freqs = tuple(int(f) for f in freqs)
        if len(set(freqs)) != len(freqs):
            raise ConfigError(f"duplicate basis frequencies {freqs}")
        if len(freqs) > N:
            raise ConfigError(f"Nc={len(freqs)} exceeds N={N}")
        k = np.arange(N)[:, None]
        B = np.exp(2j * np.pi * k * np.asarray(freqs)[None, :] / N)
        B.setflags(write=False)
        return cls(kind, N, freqs, B)

    @property
    def Nc(self) -> int:
        return len(self.freq_indices)

    def __eq__(self, other):
        if not isinstance(other, BemBasis):
            return NotImplemented
        return (self.kind, self.N, self.freq_indices) == (
            other.kind, other.N, other.freq_indices)

    def __hash__(self):
        return hash((self.kind, self.N, self.freq_indices))


def make_basis(kind: BasisKind | str, N: int, Nc: int) -> BemBasis:
    """Build the low- or high-frequency Fourier basis.

    Low uses frequencies ``m - (Nc-1)/2`` and high uses ``2m - (Nc-1)`` for
    ``m = 0..Nc-1``, in units of ``2*pi/N``. ``CONCAT`` returns the
    deduplicated union of the low and high sets of the same ``Nc``.
    """
    kind = BasisKind(kind) if isinstance(kind, str) else kind
    if Nc < 1 or Nc > N:
        raise ConfigError(f"need 1 <= Nc <= N, got Nc={Nc}, N={N}")
    if Nc % 2 == 0:
        raise ConfigError(f"Nc must be odd for a centred frequency set, got {Nc}")
    m = np.arange(Nc)
    if kind is BasisKind.LOW:
        return BemBasis.from_frequencies(kind, N, m - (Nc - 1) // 2)
    if kind is BasisKind.HIGH:
        return BemBasis.from_frequencies(kind, N, 2 * m - (Nc - 1))
    return concat_bases(make_basis(BasisKind.LOW, N, Nc), make_basis(BasisKind.HIGH, N, Nc))


def concat_bases(*bases: BemBasis) -> BemBasis:
    """Union of the frequency sets, sorted ascending, duplicates removed."""
    N = bases[0].N
    if any(b.N != N for b in bases):
        raise ConfigError("cannot concatenate bases of different N")
    freqs = sorted(set().union(*(b.freq_indices for b in bases)))
    return BemBasis.from_frequencies(BasisKind.CONCAT, N, freqs)


def project_taps(basis: BemBasis, h) -> np.ndarray:
    """Least-squares BEM coefficients ``(B^H B)^-1 B^H h``.

    ``h`` may carry leading batch axes; the last axis has length N.
    """
    B = basis.matrix
    # distinct DFT columns: B^H B = N I
    return np.asarray(h) @ B.conj() / basis.N


def reconstruct_taps(basis: BemBasis, c) -> np.ndarray:
    return np.asarray(c) @ basis.matrix.T


def coeff_correlation(basis: BemBasis, R_h) -> np.ndarray:
    """Map a tap-domain correlation matrix to coefficient space."""
    R_h = np.asarray(R_h)
    if R_h.shape != (basis.N, basis.N):
        raise ValueError(f"R_h must be {basis.N}x{basis.N}, got {R_h.shape}")
    B = basis.matrix
    return B.conj().T @ R_h @ B / basis.N**2


def build_measurement_matrix(basis: BemBasis, X, L: int) -> np.ndarray:
    """Measurement matrix ``S_n`` such that ``y_n = S_n c_n + w_n``.

    Column ``l*Nc + d`` is ``sqrt(N) * diag(b_d) F^H diag(X) f_l`` with ``f_l``
    the l-th column of the unitary DFT matrix. With that F each column of
    ``[V_0 ... V_{L-1}]`` is ``b_d * roll(x, l) / sqrt(N)``, hence the
    ``sqrt(N)`` prefactor rather than ``1/sqrt(N)``.
    """
    X = np.asarray(X, dtype=complex)
    N = basis.N
    if X.shape != (N,):
        raise ValueError(f"X must have length {N}, got shape {X.shape}")
    k = np.arange(N)
    f = np.exp(-2j * np.pi * np.outer(k, np.arange(L)) / N) / np.sqrt(N)
    # F^H diag(X) f_l for all l at once: (N, L)
    z = np.fft.ifft(X[:, None] * f, axis=0, norm="ortho")
    S = np.sqrt(N) * basis.matrix[:, None, :] * z[:, :, None]
    return S.reshape(N, L * basis.Nc)
