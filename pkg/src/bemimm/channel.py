"""Doubly-selective channel: Jakes statistics, BEM-driven generation, matrices."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import j0

from .bem import BemBasis, reconstruct_taps
from .errors import ConfigError, StatisticsError

__all__ = [
    "ChannelProfile",
    "ChannelRealization",
    "jakes_correlation_matrix",
    "generate_bem_channel",
    "coefficient_transfer",
    "channel_matrix",
    "build_channel_matrix",
    "apply_channel",
    "freq_channel",
    "complex_gaussian",
    "psd_factor",
    "write_realization",
    "read_realization",
]


@dataclass(frozen=True)
class ChannelProfile:
    """Tap powers plus the timing needed for the Jakes correlation."""

    pdp_db: tuple[float, ...]
    fd: float
    Ts: float
    Ns: int
    sigma2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.pdp_db) == 0:
            raise ConfigError("power delay profile is empty")
        if self.fd < 0 or self.Ts <= 0 or self.Ns <= 0:
            raise ConfigError("need fd >= 0, Ts > 0, Ns > 0")
        lin = 10.0 ** (np.asarray(self.pdp_db, dtype=float) / 10)
        # normalized to unit total power so that SNR is per received sample
        object.__setattr__(self, "sigma2", lin / lin.sum())

    @property
    def L(self) -> int:
        return len(self.pdp_db)

    @property
    def normalized_doppler(self) -> float:
        """Doppler times OFDM symbol duration (``fd * Ns * Ts``)."""
        return self.fd * self.Ns * self.Ts


@dataclass
class ChannelRealization:
    """Ground truth for one frame.

    taps[l, n, q] is the gain of tap ``l`` at sample ``q`` of symbol ``n``;
    schedule[n] is the generating model (1 or 2); true_coeffs[l, n] the
    coefficients that produced ``taps[l, n]`` through that model's basis
    (a per-symbol list when the two bases differ in size).
    """

    taps: np.ndarray
    schedule: np.ndarray
    true_coeffs: np.ndarray | None = None

    @property
    def L(self) -> int:
        return self.taps.shape[0]

    @property
    def frame_len(self) -> int:
        return self.taps.shape[1]

    @property
    def N(self) -> int:
        return self.taps.shape[2]


def jakes_correlation_matrix(profile: ChannelProfile, l: int, lag: int, N: int) -> np.ndarray:
    """``E[h_{l,n} h_{l,n-lag}^H]`` for the Jakes Doppler spectrum."""
    if not 0 <= l < profile.L:
        raise IndexError(f"tap {l} out of range for L={profile.L}")
    k = np.arange(N)
    diff = k[:, None] - k[None, :] + lag * profile.Ns
    return profile.sigma2[l] * j0(2 * np.pi * profile.fd * profile.Ts * diff)


def complex_gaussian(cov_factor: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Circular complex Gaussian draws ``G z`` whose covariance is ``G G^H``."""
    shape = (cov_factor.shape[1],) if size is None else (size, cov_factor.shape[1])
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return z @ cov_factor.T


def psd_factor(C: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Square-root factor of a Hermitian PSD matrix (tolerates singularity)."""
    C = (C + C.conj().T) / 2
    w, V = np.linalg.eigh(C)
    scale = max(np.abs(w).max(initial=0.0), np.finfo(float).tiny)
    if w.min(initial=0.0) < -rtol * scale:
        raise StatisticsError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def coefficient_transfer(profile: ChannelProfile, src: BemBasis, dst: BemBasis):
    """LMMSE map from ``src`` coefficients to ``dst`` coefficients.

    Both coefficient sets are projections of the same Jakes-faded taps, so
    ``E[c_dst | c_src] = G c_src`` with ``G = R_ds R_ss^-1`` per tap, and the
    conditional covariance is ``R_dd - G R_sd``. Returns ``(G, cond_cov)``
    as block-diagonal matrices over all taps. Identical bases give ``(I, 0)``.
    """
    if src.N != dst.N:
        raise ConfigError("bases must share N")
    L, N = profile.L, src.N
    G = np.zeros((L * dst.Nc, L * src.Nc), dtype=complex)
    C = np.zeros((L * dst.Nc, L * dst.Nc), dtype=complex)
    Bs, Bd = src.matrix, dst.matrix
    for l in range(L):
        R = jakes_correlation_matrix(profile, l, 0, N)
        Rss = Bs.conj().T @ R @ Bs / N**2
        Rds = Bd.conj().T @ R @ Bs / N**2
        Rdd = Bd.conj().T @ R @ Bd / N**2
        g = np.linalg.lstsq(Rss, Rds.conj().T, rcond=1e-13)[0].conj().T
        cov = Rdd - g @ Rds.conj().T
        d = slice(l * dst.Nc, (l + 1) * dst.Nc)
        G[d, l * src.Nc:(l + 1) * src.Nc] = g
        C[d, d] = (cov + cov.conj().T) / 2
    return G, C


def generate_bem_channel(
    frame_len: int,
    bases: tuple[BemBasis, BemBasis],
    ar,
    rng: np.random.Generator,
    switch_at: int | None = -1,
    transfer=None,
) -> ChannelRealization:
    """Draw a frame whose taps follow ``bases[0]`` then ``bases[1]``.

    Coefficients evolve as ``c_n = A c_{n-1} + u_n`` under the AR model of the
    active basis, starting from its stationary distribution. At ``switch_at``
    (default: mid-frame) the second model takes over. Without ``transfer`` its
    coefficients are a fresh stationary draw, so the taps jump. With
    ``transfer = (G, C)`` from :func:`coefficient_transfer` (``bases[0]`` to
    ``bases[1]``) the first model is stepped once more and its coefficients
    are carried over as ``G c + CN(0, C)``: still stationary for the second
    model, but continuous in the tap trajectory. ``switch_at=None`` keeps
    model 1 for the whole frame.

    ``ar`` is a pair of :class:`~bemimm.kalman.ArModel` matched to ``bases``.
    """
    if switch_at == -1:
        if frame_len % 2:
            raise ConfigError(f"frame length must be even, got {frame_len}")
        switch_at = frame_len // 2
    if switch_at is None:
        switch_at = frame_len
    if bases[0].N != bases[1].N:
        raise ConfigError("both bases must share N")
    N = bases[0].N
    L = ar[0].L
    if ar[0].Nc != bases[0].Nc or ar[1].Nc != bases[1].Nc or ar[1].L != L:
        raise ConfigError("AR models do not match the bases")

    noise_factor = [psd_factor(m.U) for m in ar]
    schedule = np.where(np.arange(frame_len) < switch_at, 1, 2)
    coeffs = []
    for n in range(frame_len):
        j = schedule[n] - 1
        if n == 0:
            c = complex_gaussian(psd_factor(ar[j].stationary_cov), rng)
        elif schedule[n] != schedule[n - 1]:
            if transfer is None:
                c = complex_gaussian(psd_factor(ar[1].stationary_cov), rng)
            else:
                G, C = transfer
                prev = ar[0].A @ coeffs[-1] + complex_gaussian(noise_factor[0], rng)
                c = G @ prev + complex_gaussian(psd_factor(C), rng)
        else:
            c = ar[j].A @ coeffs[-1] + complex_gaussian(noise_factor[j], rng)
        coeffs.append(c)

    taps = np.empty((L, frame_len, N), dtype=complex)
    true_coeffs = []
    for n, c in enumerate(coeffs):
        B = bases[schedule[n] - 1]
        cl = c.reshape(L, B.Nc)
        true_coeffs.append(cl)
        taps[:, n] = reconstruct_taps(B, cl)
    same_nc = len({c.shape for c in true_coeffs}) == 1
    stacked = np.stack(true_coeffs, axis=1) if same_nc else true_coeffs
    return ChannelRealization(taps, schedule, stacked)


def channel_matrix(taps_n) -> np.ndarray:
    """Time-domain channel matrix from an ``(L, N)`` array of tap trajectories.

    ``H[q, m] = h_{(q-m) mod N}(q)`` for ``(q-m) mod N < L``, zero otherwise,
    which is circular convolution with a per-sample impulse response.
    """
    taps_n = np.asarray(taps_n)
    L, N = taps_n.shape
    H = np.zeros((N, N), dtype=complex)
    q = np.arange(N)
    for l in range(L):
        H[q, (q - l) % N] = taps_n[l]
    return H


def build_channel_matrix(real: ChannelRealization, n: int) -> np.ndarray:
    if not 0 <= n < real.frame_len:
        raise IndexError(f"symbol {n} outside frame of length {real.frame_len}")
    return channel_matrix(real.taps[:, n, :])


def apply_channel(H, x, sigma_w2: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_w2 < 0:
        raise ConfigError(f"noise variance must be >= 0, got {sigma_w2}")
    y = np.asarray(H) @ np.asarray(x)
    if sigma_w2 == 0:
        return y
    w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + np.sqrt(sigma_w2 / 2) * w


def freq_channel(H) -> np.ndarray:
    """``G = F H F^H`` with the unitary DFT."""
    H = np.asarray(H)
    return np.fft.ifft(np.fft.fft(H, axis=0, norm="ortho"), axis=1, norm="ortho")


_HEADER = struct.Struct("<III")


def write_realization(path, real: ChannelRealization) -> None:
    """Dump taps as ``<u4 N, <u4 L, <u4 frame_len`` then ``<c8[L, frame_len, N]``."""
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(real.N, real.L, real.frame_len))
        fh.write(np.ascontiguousarray(real.taps, dtype="<c8").tobytes())


def read_realization(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    N, L, frame_len = _HEADER.unpack_from(raw)
    taps = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if taps.size != N * L * frame_len:
        raise ValueError(f"truncated realization file {path}")
    return taps.reshape(L, frame_len, N)
