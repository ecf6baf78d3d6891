"""AR(1) coefficient dynamics, preamble acquisition and the BEM Kalman filter."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.linalg as sla

from .bem import BemBasis, coeff_correlation
from .channel import ChannelProfile, jakes_correlation_matrix
from .errors import AcquisitionError, FilterError, StatisticsError

__all__ = [
    "ArModel",
    "KalmanState",
    "derive_ar_model",
    "jakes_ar_model",
    "ls_acquire",
    "predict",
    "update",
    "hermitian",
    "is_psd",
]


def hermitian(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


def is_psd(M: np.ndarray, rtol: float = 1e-8) -> bool:
    """Hermitian and ``min eig >= -rtol * trace / dim``."""
    dim = M.shape[0]
    scale = max(abs(np.trace(M).real) / dim, np.finfo(float).tiny)
    if np.max(np.abs(M - M.conj().T), initial=0.0) > 1e-10 * max(scale, 1.0):
        return False
    return np.linalg.eigvalsh(hermitian(M)).min() >= -rtol * scale


@dataclass(frozen=True)
class ArModel:
    """Block-diagonal ``c_n = A c_{n-1} + u_n`` with ``u_n ~ CN(0, U)``.

    ``stationary_cov`` is the lag-0 coefficient correlation the model was fit
    to; it satisfies ``A R0 A^H + U = R0``.
    """

    A: np.ndarray
    U: np.ndarray
    stationary_cov: np.ndarray
    L: int
    Nc: int

    def block(self, l: int) -> tuple[np.ndarray, np.ndarray]:
        s = slice(l * self.Nc, (l + 1) * self.Nc)
        return self.A[s, s], self.U[s, s]


def _nearest_psd(U: np.ndarray, tol: float) -> np.ndarray:
    """Clip round-off negative eigenvalues; ``tol`` is absolute."""
    U = hermitian(U)
    w, V = np.linalg.eigh(U)
    if w.min() < -tol:
        raise StatisticsError(f"process noise covariance not PSD (min eig {w.min():.3e})")
    if w.min() < 0:
        U = hermitian((V * np.clip(w, 0, None)) @ V.conj().T)
    return U


def derive_ar_model(
    Rc0: Sequence[np.ndarray],
    Rc1: Sequence[np.ndarray],
    Rcm1: Sequence[np.ndarray],
    *,
    rcond: float = 1e-7,
    loading: float = 1e-6,
    psd_tol: float = 1e-8,
) -> ArModel:
    """Yule-Walker fit of one AR(1) block per tap.

    ``A_l = R1 R0^-1`` and ``U_l = R0 - A_l R(-1)``. When the lag-0 matrix
    has condition number above ``1/rcond`` it is diagonally loaded by
    ``loading * trace/Nc`` first, and the loaded matrix becomes the model's
    stationary covariance. Without loading, near-null directions of R0 give
    huge entries in ``A`` and a vanishing ``U``, i.e. an overconfident
    predictor.
    """
    L = len(Rc0)
    if not (len(Rc1) == len(Rcm1) == L):
        raise ValueError("need one correlation matrix per tap for each lag")
    Nc = np.asarray(Rc0[0]).shape[0]
    A = np.zeros((L * Nc, L * Nc), dtype=complex)
    U = np.zeros_like(A)
    R = np.zeros_like(A)
    for l in range(L):
        R0 = hermitian(np.asarray(Rc0[l], dtype=complex))
        R1 = np.asarray(Rc1[l], dtype=complex)
        Rm1 = np.asarray(Rcm1[l], dtype=complex)
        w = np.linalg.eigvalsh(R0)
        if w.max() <= 0:
            raise StatisticsError(f"lag-0 coefficient correlation of tap {l} is not PD")
        if w.min() < rcond * w.max():
            R0 = R0 + loading * np.trace(R0).real / Nc * np.eye(Nc)
        try:
            cf = sla.cho_factor(R0)
        except np.linalg.LinAlgError as exc:
            raise StatisticsError(f"lag-0 correlation of tap {l} singular") from exc
        # A R0 = R1  <=>  R0 A^H = R1^H
        Al = sla.cho_solve(cf, R1.conj().T).conj().T
        # cancellation happens at the scale of R0, so the tolerance does too
        Ul = _nearest_psd(R0 - Al @ Rm1, psd_tol * np.trace(R0).real / Nc)
        s = slice(l * Nc, (l + 1) * Nc)
        A[s, s], U[s, s], R[s, s] = Al, Ul, R0
    return ArModel(A, U, R, L, Nc)


def jakes_ar_model(profile: ChannelProfile, basis: BemBasis, rcond: float = 1e-7,
                   loading: float = 1e-6) -> ArModel:
    """AR(1) model of ``basis`` coefficients under Jakes fading for every tap."""
    corr = {
        p: [coeff_correlation(basis, jakes_correlation_matrix(profile, l, p, basis.N))
            for l in range(profile.L)]
        for p in (0, 1, -1)
    }
    return derive_ar_model(corr[0], corr[1], corr[-1], rcond=rcond, loading=loading)


@dataclass
class KalmanState:
    c_hat: np.ndarray
    M: np.ndarray
    kind: Literal["predicted", "filtered"] = "filtered"


def ls_acquire(preamble_ys, preamble_Ss, sigma_w2: float) -> KalmanState:
    """LS coefficient estimate from K known preamble symbols.

    The stacked system is block diagonal, so the joint LS solution decouples
    into one solve per symbol. The last symbol's estimate seeds the tracker
    with covariance ``sigma_w2 (S^H S)^-1``.
    """
    if len(preamble_ys) != len(preamble_Ss) or len(preamble_ys) == 0:
        raise ValueError("need one measurement matrix per preamble symbol")
    c_hat = M = None
    for y, S in zip(preamble_ys, preamble_Ss):
        G = S.conj().T @ S
        try:
            cf = sla.cho_factor(hermitian(G))
        except np.linalg.LinAlgError as exc:
            raise AcquisitionError("preamble measurement matrix is rank deficient") from exc
        if np.linalg.cond(G) > 1e12:
            raise AcquisitionError("preamble measurement matrix is rank deficient")
        c_hat = sla.cho_solve(cf, S.conj().T @ y)
        M = sigma_w2 * hermitian(sla.cho_solve(cf, np.eye(G.shape[0])))
    return KalmanState(c_hat, M, "filtered")


def predict(s: KalmanState, ar: ArModel) -> KalmanState:
    """Time update: ``c <- A c``, ``M <- A M A^H + U``."""
    A = ar.A
    return KalmanState(A @ s.c_hat, hermitian(A @ s.M @ A.conj().T + ar.U), "predicted")


def update(s: KalmanState, S: np.ndarray, y: np.ndarray, sigma_w2: float):
    """Measurement update.

    Returns the filtered state, the innovation ``y - S c_pred`` and its
    covariance ``Q = sigma_w2 I + S M S^H``.
    """
    if sigma_w2 <= 0:
        raise FilterError("measurement update needs sigma_w2 > 0")
    M = s.M
    SM = S @ M
    Q = hermitian(SM @ S.conj().T)
    Q[np.diag_indices_from(Q)] += sigma_w2
    v = y - S @ s.c_hat
    try:
        cf = sla.cho_factor(Q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FilterError("innovation covariance is not positive definite") from exc
    # K = M S^H Q^-1 = (Q^-1 S M)^H
    K = sla.cho_solve(cf, SM).conj().T
    c_new = s.c_hat + K @ v
    I_KS = np.eye(M.shape[0]) - K @ S
    M_new = hermitian(I_KS @ M)
    if not is_psd(M_new):
        # Joseph form keeps PSD under round-off
        M_new = hermitian(I_KS @ M @ I_KS.conj().T + sigma_w2 * K @ K.conj().T)
    return KalmanState(c_new, M_new, "filtered"), v, Q
