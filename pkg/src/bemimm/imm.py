"""Interacting multiple model combiner over BEM-matched Kalman filters.

One cycle: mixing probabilities, mixed initial conditions, mode-matched
predict/update with innovation likelihoods, mode-probability update, and
moment-matched combination. Probabilities are handled in the log domain since
the N-dimensional innovation densities routinely under- or overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .bem import BemBasis, reconstruct_taps
from .errors import ConfigError, FilterError
from .kalman import ArModel, KalmanState, hermitian, predict, update

__all__ = [
    "ImmState",
    "ImmOutput",
    "calc_mixing_probs",
    "mix_initial_conditions",
    "model_likelihood",
    "update_mode_probs",
    "combine",
    "imm_step",
    "uniform_transition",
]


def uniform_transition(r: int = 2) -> np.ndarray:
    return np.full((r, r), 1.0 / r)


@dataclass
class ImmState:
    filters: list[KalmanState]
    mu: np.ndarray
    P: np.ndarray
    bases: tuple[BemBasis, ...]
    ar: tuple[ArModel, ...]
    # transfers[i][j]: (G, C) mapping filter i's state into basis j; None mixes raw vectors
    transfers: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        r = len(self.filters)
        if not (len(self.mu) == len(self.bases) == len(self.ar) == r):
            raise ConfigError("filters, mu, bases and AR models must have equal length")
        if self.P.shape != (r, r):
            raise ConfigError(f"transition matrix must be {r}x{r}")
        if np.any(self.P < 0) or not np.allclose(self.P.sum(axis=1), 1.0, atol=1e-12):
            raise ConfigError("transition matrix rows must be probability vectors")
        if np.any(self.mu < 0) or abs(self.mu.sum() - 1.0) > 1e-12:
            raise ConfigError(f"mode probabilities {self.mu} are not normalized")
        if self.transfers is None and len({f.c_hat.shape for f in self.filters}) != 1:
            raise ConfigError("mixing without transfers needs equal state dimensions")


@dataclass
class ImmOutput:
    c_combined: np.ndarray
    M_combined: np.ndarray
    taps_combined: np.ndarray
    mu: np.ndarray
    log_likelihoods: np.ndarray


def calc_mixing_probs(P, mu_prev):
    """Return ``(mu_cond, c_bar)`` with ``mu_cond[i, j] = P[i, j] mu[i] / c_bar[j]``.

    When ``c_bar[j]`` is zero because the prior puts no mass on any model that
    can reach ``j``, model ``j`` keeps its own state (column ``e_j``); it will
    carry zero probability after the update anyway.
    """
    P = np.asarray(P, dtype=float)
    mu_prev = np.asarray(mu_prev, dtype=float)
    if np.any(P.sum(axis=0) <= 0):
        raise FilterError("transition matrix has an all-zero column")
    joint = P * mu_prev[:, None]
    c_bar = joint.sum(axis=0)
    mu_cond = np.eye(len(mu_prev))
    ok = c_bar > 0
    mu_cond[:, ok] = joint[:, ok] / c_bar[ok]
    return mu_cond, c_bar


def _moment_match(states: Sequence[KalmanState], weights) -> KalmanState:
    c = sum(w * s.c_hat for w, s in zip(weights, states))
    M = np.zeros_like(states[0].M)
    for w, s in zip(weights, states):
        if w == 0:
            continue
        d = s.c_hat - c
        M = M + w * (s.M + np.outer(d, d.conj()))
    return KalmanState(c, hermitian(M), states[0].kind)


def mix_initial_conditions(filters: Sequence[KalmanState], mu_cond, transfers=None) -> list[KalmanState]:
    """Mixed prior for each filter ``j`` from column ``j`` of ``mu_cond``.

    ``transfers[i][j]`` is an optional ``(G, C)`` pair (see
    :func:`bemimm.channel.coefficient_transfer`) taking filter ``i``'s state
    into filter ``j``'s coordinates as ``G c``, ``G M G^H + C`` before the
    moment matching. Without it the state vectors are mixed as they are,
    which presumes one shared coefficient space.
    """
    mu_cond = np.asarray(mu_cond)
    r = mu_cond.shape[1]
    if transfers is None:
        return [_moment_match(filters, mu_cond[:, j]) for j in range(r)]
    out = []
    for j in range(r):
        mapped = []
        for i, f in enumerate(filters):
            if i == j:
                mapped.append(f)
                continue
            G, C = transfers[i][j]
            mapped.append(KalmanState(G @ f.c_hat, hermitian(G @ f.M @ G.conj().T + C), f.kind))
        out.append(_moment_match(mapped, mu_cond[:, j]))
    return out


def model_likelihood(innovation, Q) -> float:
    """Log of the circular complex Gaussian density ``CN(v; 0, Q)``."""
    v = np.asarray(innovation)
    try:
        cf = sla.cho_factor(Q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FilterError("innovation covariance is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0]).real))
    quad = np.vdot(v, sla.cho_solve(cf, v)).real
    return float(-v.size * np.log(np.pi) - logdet - quad)


def update_mode_probs(log_likelihoods, c_bar) -> np.ndarray:
    """``mu_j proportional to Lambda_j * c_bar_j``, normalized with max-subtraction."""
    with np.errstate(divide="ignore"):
        score = np.asarray(log_likelihoods, dtype=float) + np.log(np.asarray(c_bar, dtype=float))
    top = score.max()
    if not np.isfinite(top):
        raise FilterError("all model likelihoods vanished")
    w = np.exp(score - top)
    return w / w.sum()


def combine(filters_post: Sequence[KalmanState], mu, bases: Sequence[BemBasis]) -> ImmOutput:
    """Probability-weighted estimate, covariance and tap trajectories.

    The coefficient-space moments follow the textbook combination over the
    raw state vectors; the taps are mixed after mapping each filter through
    its own basis, which is what the equalizer consumes.
    """
    mu = np.asarray(mu, dtype=float)
    merged = _moment_match(filters_post, mu)
    taps = 0
    for w, s, B in zip(mu, filters_post, bases):
        if w == 0:
            continue
        taps = taps + w * reconstruct_taps(B, s.c_hat.reshape(-1, B.Nc))
    return ImmOutput(merged.c_hat, merged.M, taps, mu, np.full(len(mu), np.nan))


def imm_step(state: ImmState, S_pair, y, sigma_w2: float):
    """One IMM cycle; returns the new state and the combined output."""
    mu_cond, c_bar = calc_mixing_probs(state.P, state.mu)
    mixed = mix_initial_conditions(state.filters, mu_cond, state.transfers)
    posts, loglik = [], np.empty(len(mixed))
    for j, (s0, ar, S) in enumerate(zip(mixed, state.ar, S_pair)):
        post, v, Q = update(predict(s0, ar), S, y, sigma_w2)
        posts.append(post)
        loglik[j] = model_likelihood(v, Q)
    mu = update_mode_probs(loglik, c_bar)
    out = combine(posts, mu, state.bases)
    out.log_likelihoods = loglik
    return replace(state, filters=posts, mu=mu), out
