"""Monte Carlo experiments: paired-seed runs over an Eb/N0 grid."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bem import BasisKind, BemBasis, make_basis
from .channel import ChannelProfile, ChannelRealization, coefficient_transfer, generate_bem_channel
from .config import SimConfig
from .kalman import ArModel, jakes_ar_model
from .ofdm import Constellation
from .receiver import ImmEstimator, SingleKF, compute_mse, run_frame

__all__ = [
    "ESTIMATORS",
    "Models",
    "MseReport",
    "build_models",
    "make_estimator",
    "sigma_w2_from_ebn0",
    "compute_mse",
    "run_experiment",
    "run_single",
    "MSE_HEADER",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("imm", "concat", "low", "high")
MSE_HEADER = ("estimator", "ebn0_db", "tap", "mse")
TRACE_HEADER = ("estimator", "ebn0_db", "symbol_index", "mu1", "mu2")


def sigma_w2_from_ebn0(ebn0_db: float, c: Constellation) -> float:
    """Noise variance for unit-energy symbols and unit total channel power."""
    return 1.0 / (c.bits_per_symbol * 10.0 ** (ebn0_db / 10.0))


@dataclass(frozen=True)
class Models:
    profile: ChannelProfile
    bases: dict[str, BemBasis]
    ar: dict[str, ArModel]
    # LMMSE coefficient maps between the IMM bases: transfers[i][j], i != j
    transfers: list


def build_models(cfg: SimConfig) -> Models:
    profile = ChannelProfile(cfg.pdp_db, cfg.doppler_hz, cfg.Ts, cfg.Ns)
    low = make_basis(BasisKind.LOW, cfg.N, cfg.Nc)
    high = make_basis(BasisKind.HIGH, cfg.N, cfg.Nc)
    concat = make_basis(BasisKind.CONCAT, cfg.N, cfg.Nc)
    bases = {"low": low, "high": high, "concat": concat}
    pair = (low, high)
    transfers = [[None if i == j else coefficient_transfer(profile, pair[i], pair[j])
                  for j in range(2)] for i in range(2)]
    return Models(profile, bases, {k: jakes_ar_model(profile, b, cfg.ar_rcond, cfg.ar_loading) for k, b in bases.items()},
                  transfers)


def make_estimator(name: str, cfg: SimConfig, models: Models):
    if name == "imm":
        return ImmEstimator(
            (models.bases["low"], models.bases["high"]),
            (models.ar["low"], models.ar["high"]),
            cfg.P, cfg.mu0,
            transfers=models.transfers if cfg.imm_mixing == "basis" else None)
    if name in ("concat", "low", "high"):
        return SingleKF(models.bases[name], models.ar[name], name=name)
    raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")


def _streams(seed: int, run: int):
    """Independent channel and data/noise generators for one Monte Carlo run."""
    channel_ss, data_ss = np.random.SeedSequence([seed, run]).spawn(2)
    return channel_ss, data_ss


def realization_for_run(cfg: SimConfig, models: Models, run: int) -> ChannelRealization:
    channel_ss, _ = _streams(cfg.seed, run)
    return generate_bem_channel(
        cfg.frame_len,
        (models.bases["low"], models.bases["high"]),
        (models.ar["low"], models.ar["high"]),
        np.random.default_rng(channel_ss),
        transfer=models.transfers[0][1] if cfg.switch_mode == "continuous" else None,
    )


def run_single(cfg: SimConfig, run: int, estimators: Sequence[str], genie: bool = False,
               models: Models | None = None):
    """All (Eb/N0, estimator) evaluations for one run.

    Every estimator and every Eb/N0 point reuses the same channel realization
    and the same bit/noise stream, so comparisons are paired.
    Returns ``{(name, ebn0): (per_tap_mse, mode_trace)}``.
    """
    models = models or build_models(cfg)
    real = realization_for_run(cfg, models, run)
    _, data_ss = _streams(cfg.seed, run)
    c = cfg.constellation_obj
    out = {}
    for ebn0 in cfg.ebn0_grid_db:
        sigma_w2 = sigma_w2_from_ebn0(ebn0, c)
        for name in estimators:
            res = run_frame(cfg, real, make_estimator(name, cfg, models),
                            np.random.default_rng(data_ss), sigma_w2=sigma_w2, genie=genie)
            trace = res.mode_trace if res.mode_trace.shape[1] == 2 else None
            out[(name, ebn0)] = (res.per_tap_mse, trace)
    return out


def _run_single_star(args):
    return args[1], run_single(*args[0])


@dataclass
class MseReport:
    """Run-averaged per-tap MSE and mean mode-probability traces."""

    mse: dict[tuple[str, float], np.ndarray]
    mode_trace: dict[tuple[str, float], np.ndarray]
    runs_completed: int
    seed: int
    estimators: tuple[str, ...]
    ebn0_grid_db: tuple[float, ...]
    per_run_mse: dict[tuple[str, float], np.ndarray] = field(default_factory=dict, repr=False)
    interrupted: bool = False

    def most_significant(self, name: str) -> np.ndarray:
        """MSE of tap 0 across the Eb/N0 grid."""
        return np.array([self.mse[(name, e)][0] for e in self.ebn0_grid_db])

    def mse_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(MSE_HEADER)
        for name in self.estimators:
            for e in self.ebn0_grid_db:
                for tap, v in enumerate(self.mse[(name, e)]):
                    w.writerow((name, repr(e), tap, repr(float(v))))
        return buf.getvalue()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for name in self.estimators:
            for e in self.ebn0_grid_db:
                tr = self.mode_trace.get((name, e))
                if tr is None:
                    continue
                for n, (m1, m2) in enumerate(tr):
                    w.writerow((name, repr(e), n, repr(float(m1)), repr(float(m2))))
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        mse_path, trace_path = out / "mse.csv", out / "mode_trace.csv"
        mse_path.write_text(self.mse_csv())
        trace_path.write_text(self.trace_csv())
        return mse_path, trace_path


def aggregate(results: dict[int, dict], cfg: SimConfig, estimators, interrupted=False) -> MseReport:
    runs = sorted(results)
    per_run, mse, traces = {}, {}, {}
    for name in estimators:
        for e in cfg.ebn0_grid_db:
            key = (name, e)
            if not runs:
                continue
            per_run[key] = np.stack([results[r][key][0] for r in runs])
            mse[key] = per_run[key].mean(axis=0)
            tr = [results[r][key][1] for r in runs]
            if tr[0] is not None:
                traces[key] = np.mean(tr, axis=0)
    return MseReport(mse, traces, len(runs), cfg.seed, tuple(estimators),
                     cfg.ebn0_grid_db, per_run, interrupted)


def run_experiment(cfg: SimConfig, estimators: Iterable[str] = ("imm", "concat"),
                   genie: bool = False, progress=None) -> MseReport:
    """Monte Carlo loop over ``cfg.mc_runs`` paired runs.

    Runs are seeded from ``(cfg.seed, run_index)`` and aggregated in run
    order, so the report does not depend on worker scheduling. A
    ``KeyboardInterrupt`` returns the runs finished so far with
    ``interrupted=True``.
    """
    estimators = tuple(estimators)
    for name in estimators:
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
    models = build_models(cfg)
    results: dict[int, dict] = {}
    interrupted = False
    try:
        if cfg.workers == 1:
            for run in range(cfg.mc_runs):
                results[run] = run_single(cfg, run, estimators, genie, models)
                if progress:
                    progress(run + 1, cfg.mc_runs)
        else:
            jobs = [((cfg, run, estimators, genie), run) for run in range(cfg.mc_runs)]
            with ProcessPoolExecutor(cfg.workers) as pool:
                for done, (run, res) in enumerate(pool.map(_run_single_star, jobs), 1):
                    results[run] = res
                    if progress:
                        progress(done, cfg.mc_runs)
    except KeyboardInterrupt:
        log.warning("interrupted after %d of %d runs", len(results), cfg.mc_runs)
        interrupted = True
    return aggregate(results, cfg, estimators, interrupted)
