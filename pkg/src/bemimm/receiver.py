"""Decision-directed frame processing around a channel tracker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bem import BemBasis, build_measurement_matrix, reconstruct_taps
from .channel import ChannelRealization, apply_channel, channel_matrix
from .imm import ImmState, imm_step, model_likelihood
from .kalman import ArModel, KalmanState, ls_acquire, predict, update
from .ofdm import BPSK, Constellation, map_symbols, ofdm_demodulate, ofdm_modulate, random_bits, slice_symbols, strip_cp

__all__ = [
    "FrameResult",
    "SingleKF",
    "ImmEstimator",
    "equalize_and_detect",
    "run_frame",
    "compute_mse",
    "stationary_prior",
]


@dataclass
class FrameResult:
    tap_estimates: np.ndarray  # (L, frame_len, N)
    mode_trace: np.ndarray  # (frame_len, n_models)
    detected: np.ndarray  # (frame_len, N) frequency-domain decisions
    per_tap_mse: np.ndarray  # (L,)
    log_likelihoods: np.ndarray = field(repr=False, default=None)  # (frame_len, n_models)
    innovation_trace: np.ndarray = field(repr=False, default=None)  # (frame_len, n_models)
    symbol_errors: int = 0


def compute_mse(truth, estimate) -> np.ndarray:
    """Per-tap ``||h_l - h_hat_l||^2 / (frame_len * N)`` over ``(L, frame_len, N)`` arrays."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    if truth.ndim != 3:
        raise ValueError("expected (L, frame_len, N) tap trajectories")
    err = np.abs(truth - estimate) ** 2
    return err.sum(axis=(1, 2)) / (truth.shape[1] * truth.shape[2])


def equalize_and_detect(taps_prev, y, c: Constellation, sigma_w2: float):
    """Regularized LS equalization with a tap estimate, then hard slicing.

    Solves ``(H^H H + sigma_w2 I) x = H^H y`` over the full time-domain
    system (ICI makes per-subcarrier equalization wrong), demodulates and
    slices. Returns ``(X_hat, x_hat)`` with ``x_hat`` the IDFT of ``X_hat``.
    """
    H = channel_matrix(taps_prev)
    Hh = H.conj().T
    G = Hh @ H
    G[np.diag_indices_from(G)] += sigma_w2
    try:
        x = np.linalg.solve(G, Hh @ y)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(H, y, rcond=None)[0]
    X_hat = c.points[slice_symbols(ofdm_demodulate(x), c)]
    return X_hat, np.fft.ifft(X_hat, norm="ortho")


def stationary_prior(ar: ArModel) -> KalmanState:
    """``CN(0, R0)``: the coefficient distribution before any observation.

    Prediction leaves it unchanged (``A R0 A^H + U = R0``), so a tracker
    started here can run its usual cycle from the first preamble symbol.
    """
    return KalmanState(np.zeros(ar.A.shape[0], dtype=complex), ar.stationary_cov.copy())


class SingleKF:
    """One Kalman filter matched to one basis."""

    def __init__(self, basis: BemBasis, ar: ArModel, name: str | None = None):
        self.bases = (basis,)
        self.ar = ar
        self.name = name or basis.kind.value
        self.state = None

    @property
    def n_models(self) -> int:
        return 1

    def acquire(self, ys, Xs, sigma_w2: float, L: int):
        B = self.bases[0]
        Ss = [build_measurement_matrix(B, X, L) for X in Xs]
        taps = []
        for y, S in zip(ys, Ss):
            s = ls_acquire([y], [S], sigma_w2)
            taps.append(reconstruct_taps(B, s.c_hat.reshape(L, B.Nc)))
        self.state = s
        return np.stack(taps, axis=1), np.ones((len(ys), 1))

    def start_from_prior(self):
        """Zero-mean state with the stationary covariance, ready for symbol 0."""
        self.state = stationary_prior(self.ar)

    def predicted_taps(self, L: int) -> np.ndarray:
        B = self.bases[0]
        return reconstruct_taps(B, (self.ar.A @ self.state.c_hat).reshape(L, B.Nc))

    def step(self, X, y, sigma_w2: float, L: int):
        B = self.bases[0]
        S = build_measurement_matrix(B, X, L)
        self.state, v, Q = update(predict(self.state, self.ar), S, y, sigma_w2)
        taps = reconstruct_taps(B, self.state.c_hat.reshape(L, B.Nc))
        return taps, np.ones(1), np.array([model_likelihood(v, Q)]), np.array([np.trace(Q).real])


class ImmEstimator:
    """IMM over two (or more) BEM-matched Kalman filters."""

    name = "imm"

    def __init__(self, bases, ar, P, mu0, transfers=None):
        self.transfers = transfers
        self.bases = tuple(bases)
        self.ar = tuple(ar)
        self.P = np.asarray(P, dtype=float)
        self.mu0 = np.asarray(mu0, dtype=float)
        self.state = None

    @property
    def n_models(self) -> int:
        return len(self.bases)

    def acquire(self, ys, Xs, sigma_w2: float, L: int):
        taps, filters = [], []
        for B in self.bases:
            Ss = [build_measurement_matrix(B, X, L) for X in Xs]
            per_sym = [ls_acquire([y], [S], sigma_w2) for y, S in zip(ys, Ss)]
            filters.append(per_sym[-1])
            taps.append(np.stack(
                [reconstruct_taps(B, s.c_hat.reshape(L, B.Nc)) for s in per_sym], axis=1))
        self.state = ImmState(filters, self.mu0, self.P, self.bases, self.ar, self.transfers)
        mixed = sum(m * t for m, t in zip(self.mu0, taps))
        return mixed, np.tile(self.mu0, (len(ys), 1))

    def start_from_prior(self):
        self.state = ImmState([stationary_prior(a) for a in self.ar], self.mu0, self.P,
                              self.bases, self.ar, self.transfers)

    def predicted_taps(self, L: int) -> np.ndarray:
        """Each filter's own one-step prediction, weighted by the last mode probabilities."""
        st = self.state
        taps = 0
        for w, f, ar, B in zip(st.mu, st.filters, st.ar, st.bases):
            if w > 0:
                taps = taps + w * reconstruct_taps(B, (ar.A @ f.c_hat).reshape(L, B.Nc))
        return taps

    def step(self, X, y, sigma_w2: float, L: int):
        S_pair = [build_measurement_matrix(B, X, L) for B in self.bases]
        self.state, out = imm_step(self.state, S_pair, y, sigma_w2)
        return out.taps_combined, out.mu, out.log_likelihoods, np.full(self.n_models, np.nan)


def run_frame(
    cfg,
    realization: ChannelRealization,
    estimator,
    rng: np.random.Generator,
    *,
    sigma_w2: float,
    genie: bool = False,
    preamble: str | None = None,
) -> FrameResult:
    """Transmit one frame over ``realization`` and track it with ``estimator``.

    The first ``cfg.K`` symbols are a known BPSK preamble. With
    ``preamble="prior"`` (the config default) the tracker starts from the
    stationary coefficient distribution and runs on every preamble symbol,
    which amounts to regularized LS and keeps the mode probabilities
    informed before the first decision. ``"track"`` LS-acquires symbol 0 and
    tracks the rest of the preamble; ``"ls"`` LS-acquires every preamble
    symbol and seeds the tracker with the last one. Each later symbol is equalized with the one-step prediction
    propagated from the previous symbol's estimate, sliced, and the decisions (or the true symbols when
    ``genie``) build the measurement matrices for one tracking step.
    All bits and noise are drawn from ``rng`` before processing starts, so
    different estimators given equally seeded generators see identical data.
    """
    N, Ng, K = cfg.N, cfg.Ng, cfg.K
    preamble = preamble or cfg.preamble_init
    if preamble not in ("prior", "ls", "track"):
        raise ValueError(f"unknown preamble mode {preamble!r}")
    L, T = realization.L, realization.frame_len
    if realization.N != N:
        raise ValueError(f"realization has N={realization.N}, config N={N}")
    if not 0 < K < T:
        raise ValueError(f"need 0 < K < frame_len, got K={K}")
    data_c = cfg.constellation_obj

    X = np.empty((T, N), dtype=complex)
    X[:K] = map_symbols(random_bits(K * N, rng), BPSK).reshape(K, N)
    X[K:] = map_symbols(random_bits((T - K) * N * data_c.bits_per_symbol, rng), data_c).reshape(T - K, N)
    noise = (rng.standard_normal((T, N)) + 1j * rng.standard_normal((T, N))) * np.sqrt(sigma_w2 / 2)

    ys = np.empty((T, N), dtype=complex)
    for n in range(T):
        x = strip_cp(ofdm_modulate(X[n], Ng), Ng)
        ys[n] = apply_channel(channel_matrix(realization.taps[:, n]), x, 0.0, rng) + noise[n]

    r = estimator.n_models
    est = np.empty((L, T, N), dtype=complex)
    mu = np.empty((T, r))
    loglik = np.full((T, r), np.nan)
    innov = np.full((T, r), np.nan)
    detected = np.empty((T, N), dtype=complex)

    if preamble == "prior":
        n_ls = 0
        estimator.start_from_prior()
    else:
        n_ls = 1 if preamble == "track" else K
        est[:, :n_ls], mu[:n_ls] = estimator.acquire(ys[:n_ls], X[:n_ls], sigma_w2, L)
    detected[:K] = X[:K]
    errors = 0
    for n in range(n_ls, T):
        if n < K:
            X_use = X[n]
        elif genie:
            X_use = X[n]
        else:
            X_use, _ = equalize_and_detect(estimator.predicted_taps(L), ys[n], data_c, sigma_w2)
            errors += int(np.count_nonzero(np.abs(X_use - X[n]) > 1e-9))
        detected[n] = X_use
        est[:, n], mu[n], loglik[n], innov[n] = estimator.step(X_use, ys[n], sigma_w2, L)

    return FrameResult(
        tap_estimates=est,
        mode_trace=mu,
        detected=detected,
        per_tap_mse=compute_mse(realization.taps, est),
        log_likelihoods=loglik,
        innovation_trace=innov,
        symbol_errors=errors,
    )
