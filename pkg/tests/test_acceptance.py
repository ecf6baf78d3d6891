"""Acceptance criteria 1-8.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failure still shows the measured numbers.
"""

import time

import numpy as np
import pytest

from bemimm.bem import BasisKind, BemBasis, build_measurement_matrix, coeff_correlation, make_basis, reconstruct_taps
from bemimm.channel import (
    ChannelProfile,
    channel_matrix,
    complex_gaussian,
    generate_bem_channel,
    jakes_correlation_matrix,
    psd_factor,
)
from bemimm.harness import make_estimator, run_experiment, sigma_w2_from_ebn0
from bemimm.imm import ImmState, calc_mixing_probs, imm_step
from bemimm.kalman import ArModel, KalmanState, is_psd, jakes_ar_model, ls_acquire, predict, update
from bemimm.ofdm import BPSK, QPSK
from bemimm.receiver import compute_mse, run_frame

from conftest import ACCEPTANCE_LINES, crandn, random_psd

pytestmark = pytest.mark.acceptance


def record(num, ok, detail):
    ACCEPTANCE_LINES.append((num, bool(ok), detail))
    assert ok, f"criterion {num}: {detail}"


def qpsk(rng, n):
    return QPSK.points[rng.integers(0, 4, n)]


def test_criterion_1_measurement_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        Nc = (3, 5)[i % 2]
        B = make_basis(BasisKind.LOW if i % 4 < 2 else BasisKind.HIGH, 64, Nc)
        c = crandn(rng, 4 * Nc)
        taps = reconstruct_taps(B, c.reshape(4, Nc))
        X = qpsk(rng, 64)
        Hx = channel_matrix(taps) @ np.fft.ifft(X, norm="ortho")
        S = build_measurement_matrix(B, X, 4)
        worst = max(worst, np.linalg.norm(S @ c - Hx) / np.linalg.norm(Hx))
    dt = time.perf_counter() - t0
    record(1, worst < 1e-9 and dt < 10, f"max relative residual {worst:.2e} (< 1e-9), {dt:.2f} s (< 10 s)")


def test_criterion_2_kalman_oracle():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        B = BemBasis.from_frequencies(BasisKind.LOW, 8, (0, 1))
        X = np.where(rng.random(8) < 0.5, 1.0, -1.0).astype(complex)
        S = build_measurement_matrix(B, X, 2)
        A = 0.9 * crandn(rng, 4, 4) / 2
        U, M = random_psd(rng, 4, 0.2), random_psd(rng, 4)
        c_hat, y, s2 = crandn(rng, 4), crandn(rng, 8), float(rng.uniform(0.05, 1))
        post, _, _ = update(predict(KalmanState(c_hat, M), ArModel(A, U, M, 2, 2)), S, y, s2)
        # direct conditioning of the joint Gaussian of (c_n, y_n)
        mu_c = A @ c_hat
        Scc = A @ M @ A.conj().T + U
        Scy = Scc @ S.conj().T
        Syy = S @ Scy + s2 * np.eye(8)
        mean = mu_c + Scy @ np.linalg.solve(Syy, y - S @ mu_c)
        cov = Scc - Scy @ np.linalg.solve(Syy, Scy.conj().T)
        worst = max(worst, np.abs(post.c_hat - mean).max(), np.abs(post.M - cov).max())
    dt = time.perf_counter() - t0
    record(2, worst < 1e-8 and dt < 5, f"max deviation {worst:.2e} (< 1e-8), {dt:.2f} s (< 5 s)")


def test_criterion_3_yule_walker(models, profile):
    t0 = time.perf_counter()
    B = models.bases["low"]
    assert profile.normalized_doppler == pytest.approx(0.1)
    ar = models.ar["low"]
    R1 = [coeff_correlation(B, jakes_correlation_matrix(profile, l, 1, B.N)) for l in range(profile.L)]
    yw_err, min_eig_ok = 0.0, True
    for l in range(profile.L):
        A, U = ar.block(l)
        R0 = ar.stationary_cov[l * 3:(l + 1) * 3, l * 3:(l + 1) * 3]
        yw_err = max(yw_err, np.abs(A @ R0 - R1[l]).max())
        min_eig_ok &= np.abs(U - U.conj().T).max() < 1e-12
        min_eig_ok &= np.linalg.eigvalsh(U).min() >= -1e-8 * np.trace(U).real / 3
    # 1e4 chains x 10 steps from the stationary law = 1e5 AR steps
    rng = np.random.default_rng(303)
    R = ar.stationary_cov
    c = complex_gaussian(psd_factor(R), rng, 10_000)
    Uf = psd_factor(ar.U)
    acc = np.zeros_like(R)
    for _ in range(10):
        c = c @ ar.A.T + complex_gaussian(Uf, rng, 10_000)
        acc += c.T @ c.conj()
    emp = acc / 100_000
    scale = np.sqrt(np.outer(np.diag(R).real, np.diag(R).real))
    mask = scale > 0
    rel = (np.abs(emp - R)[mask] / scale[mask]).max()
    dt = time.perf_counter() - t0
    ok = min_eig_ok and yw_err < 1e-10 and rel < 0.05
    record(3, ok, f"U Hermitian PSD: {bool(min_eig_ok)}, |A R0 - R1| {yw_err:.2e} (< 1e-10), "
                  f"empirical lag-0 max dev {100 * rel:.2f}% of sqrt(Rii Rjj) (< 5%), {dt:.1f} s")


def test_criterion_4_imm_degeneracy(cfg, models):
    c = cfg.with_(P=((1.0, 0.0), (0.0, 1.0)), mu0=(1.0, 0.0))
    rng = np.random.default_rng(404)
    real = generate_bem_channel(c.frame_len, (models.bases["low"], models.bases["high"]),
                                (models.ar["low"], models.ar["high"]), rng, transfer=models.transfers[0][1])
    s2 = sigma_w2_from_ebn0(20.0, QPSK)
    imm = run_frame(c, real, make_estimator("imm", c, models), np.random.default_rng(405), sigma_w2=s2)
    single = run_frame(c, real, make_estimator("low", c, models), np.random.default_rng(405), sigma_w2=s2)
    dev = np.abs(imm.tap_estimates - single.tap_estimates).max()
    same_decisions = np.array_equal(imm.detected, single.detected)
    mu_ok = np.array_equal(imm.mode_trace, np.tile([1.0, 0.0], (c.frame_len, 1)))
    record(4, dev < 1e-10 and same_decisions and mu_ok,
           f"max tap deviation {dev:.2e} over {c.frame_len} symbols (< 1e-10), "
           f"identical decisions: {same_decisions}, mu fixed at (1, 0): {mu_ok}")


@pytest.mark.slow
def test_criterion_5_mode_lock(cfg):
    c = cfg.with_(ebn0_grid_db=(20.0,), mc_runs=100)
    t0 = time.perf_counter()
    rep = run_experiment(c, ("imm",), genie=True)
    dt = time.perf_counter() - t0
    tr = rep.mode_trace[("imm", 20.0)]
    half = c.frame_len // 2
    mu1 = tr[20:half, 0].mean()
    mu2 = tr[half + 20:, 1].mean()
    above = tr[:, 1] > tr[:, 0]
    # first symbol from which model 2 stays dominant
    crossing = next((n for n in range(c.frame_len) if above[n:].all()), None)
    ok = mu1 > 0.8 and mu2 > 0.8 and crossing is not None and half <= crossing <= half + 15 and dt < 180
    record(5, ok, f"mean mu1 {mu1:.4f} on 20-99, mean mu2 {mu2:.4f} on 120-199 (> 0.8), "
                  f"crossing at {crossing} (100-115), {dt:.0f} s (< 180 s)")


@pytest.mark.slow
def test_criterion_6_mse_trend(cfg):
    c = cfg.with_(ebn0_grid_db=(5.0, 10.0, 15.0, 20.0, 25.0), mc_runs=100)
    t0 = time.perf_counter()
    rep = run_experiment(c, ("imm", "concat"))
    dt = time.perf_counter() - t0
    imm, cat = rep.most_significant("imm"), rep.most_significant("concat")
    beats = imm <= cat
    rises = {name: np.max(v[1:] / v[:-1]) for name, v in (("imm", imm), ("concat", cat))}
    ok = beats.all() and max(rises.values()) <= 1.10 and dt < 600
    fmt = lambda v: ", ".join(f"{x:.3g}" for x in v)
    record(6, ok, f"IMM [{fmt(imm)}] vs concat [{fmt(cat)}], IMM <= concat at {int(beats.sum())}/5 points, "
                  f"max adjacent ratio imm {rises['imm']:.2f} concat {rises['concat']:.2f} (<= 1.10), "
                  f"{dt:.0f} s (< 600 s)")


def test_criterion_7_acquisition(models):
    rng = np.random.default_rng(707)
    B, ar = models.bases["low"], models.ar["low"]
    worst, mses = 0.0, []
    for _ in range(20):
        c = complex_gaussian(psd_factor(ar.stationary_cov), rng)
        taps = reconstruct_taps(B, c.reshape(4, 3))
        H = channel_matrix(taps)
        X = BPSK.points[rng.integers(0, 2, 64)]
        S = build_measurement_matrix(B, X, 4)
        y = H @ np.fft.ifft(X, norm="ortho")
        est = ls_acquire([y], [S], 1.0).c_hat
        worst = max(worst, np.linalg.norm(est - c) / np.linalg.norm(c))
        s2 = sigma_w2_from_ebn0(40.0, QPSK)
        y_noisy = y + np.sqrt(s2) * crandn(rng, 64)
        est = ls_acquire([y_noisy], [S], s2).c_hat
        mses.append(compute_mse(taps[:, None], reconstruct_taps(B, est.reshape(4, 3))[:, None]).sum())
    mse = float(np.mean(mses))
    record(7, worst < 1e-9 and mse < 1e-3,
           f"noiseless relative error {worst:.2e} (< 1e-9), 40 dB acquisition MSE {mse:.2e} (< 1e-3)")


def test_criterion_8_probability_fuzz():
    rng = np.random.default_rng(808)
    N, L = 8, 2
    bases = (make_basis("low", N, 3), make_basis("high", N, 3))
    steps, violations = 0, []
    t0 = time.perf_counter()
    while steps < 10_000:
        fd = float(rng.uniform(0.01, 0.3))
        prof = ChannelProfile((0.0, -float(rng.uniform(0, 10))), fd=fd / ((N + 2) * 1e-6), Ts=1e-6, Ns=N + 2)
        ar = tuple(jakes_ar_model(prof, b) for b in bases)
        p, q = rng.uniform(0, 1, 2)
        P = np.array([[1 - p, p], [q, 1 - q]])
        m = float(rng.uniform(0, 1))
        fs = [KalmanState(crandn(rng, 6), random_psd(rng, 6, float(rng.uniform(1e-3, 1)))) for _ in range(2)]
        state = ImmState(fs, [m, 1 - m], P, bases, ar)
        for _ in range(25):
            X = QPSK.points[rng.integers(0, 4, N)]
            s2 = float(10 ** rng.uniform(-4, 0))
            mu_cond, _ = calc_mixing_probs(state.P, state.mu)
            state, out = imm_step(state, [build_measurement_matrix(b, X, L) for b in bases],
                                  crandn(rng, N) * float(rng.uniform(0.1, 3)), s2)
            steps += 1
            if abs(out.mu.sum() - 1) > 1e-12 or (out.mu < 0).any():
                violations.append("mu")
            if np.abs(mu_cond.sum(axis=0) - 1).max() > 1e-12:
                violations.append("mixing")
            if not (all(is_psd(f.M) for f in state.filters) and is_psd(out.M_combined)):
                violations.append("psd")
    dt = time.perf_counter() - t0
    record(8, not violations, f"{steps} random IMM steps, {len(violations)} violations "
                              f"({sorted(set(violations)) or 'none'}), {dt:.1f} s")
