"""Experiment configuration and its YAML file form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .ofdm import Constellation, Modulation

__all__ = ["SimConfig", "load_config"]


@dataclass(frozen=True)
class SimConfig:
    N: int = 64
    Ng: int = 16
    K: int = 2
    frame_len: int = 200
    mc_runs: int = 100
    ebn0_grid_db: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    # None -> fd chosen so that fd * Ns * Ts = normalized_doppler
    fd_hz: float | None = None
    normalized_doppler: float = 0.1
    Ts: float = 50e-9
    pdp_db: tuple[float, ...] = (0.0, -1.0, -3.0, -9.0)
    constellation: str = "qpsk"
    preamble: str = "bpsk"
    # "track": LS on preamble symbol 0, tracker runs on the rest; "ls": LS on all
    preamble_init: str = "prior"
    # "basis": IMM maps states between bases (LMMSE) before mixing; "shared": raw vectors
    imm_mixing: str = "basis"
    # "continuous": switch carries the old coefficients over by LMMSE; "fresh": independent draw
    switch_mode: str = "continuous"
    # lag-0 coefficient covariances with condition number above 1/ar_rcond
    # get ar_loading * trace/Nc added to the diagonal
    ar_rcond: float = 1e-7
    ar_loading: float = 1e-6
    Nc: int = 3
    P: tuple[tuple[float, ...], ...] = ((0.5, 0.5), (0.5, 0.5))
    mu0: tuple[float, ...] = (0.5, 0.5)
    seed: int = 42
    workers: int = 1

    def __post_init__(self):
        def fix(name, value):
            object.__setattr__(self, name, value)

        fix("ebn0_grid_db", tuple(float(v) for v in np.atleast_1d(self.ebn0_grid_db)))
        fix("pdp_db", tuple(float(v) for v in self.pdp_db))
        fix("P", tuple(tuple(float(v) for v in row) for row in self.P))
        fix("mu0", tuple(float(v) for v in self.mu0))
        self.validate()

    def validate(self) -> None:
        if self.N <= 0 or not 0 <= self.Ng < self.N:
            raise ConfigError(f"need 0 <= Ng < N, got N={self.N}, Ng={self.Ng}")
        if self.L >= max(self.Ng, 1):
            raise ConfigError(f"tap count L={self.L} must be below the CP length Ng={self.Ng}")
        if self.frame_len <= 0 or self.frame_len % 2:
            raise ConfigError(f"frame_len must be positive and even, got {self.frame_len}")
        if not 0 < self.K < self.frame_len:
            raise ConfigError(f"preamble length K={self.K} must be in (0, frame_len)")
        if self.Nc < 1 or self.Nc % 2 == 0:
            raise ConfigError(f"Nc must be a positive odd integer, got {self.Nc}")
        # per-symbol LS on the preamble needs N >= L * Nc for every basis
        if self.N < self.L * self.concat_Nc:
            raise ConfigError(
                f"N={self.N} too small to acquire {self.L * self.concat_Nc} coefficients")
        if self.mc_runs < 1:
            raise ConfigError("mc_runs must be at least 1")
        if self.Ts <= 0 or (self.fd_hz is not None and self.fd_hz < 0) or self.normalized_doppler < 0:
            raise ConfigError("need Ts > 0 and a non-negative Doppler")
        if self.constellation.lower() not in ("bpsk", "qpsk"):
            raise ConfigError(f"unknown constellation {self.constellation!r}")
        if self.preamble.lower() != "bpsk":
            raise ConfigError("only a BPSK preamble is supported")
        P = np.asarray(self.P)
        if P.shape != (2, 2) or np.any(P < 0) or not np.allclose(P.sum(axis=1), 1, atol=1e-12):
            raise ConfigError(f"P must be a 2x2 row-stochastic matrix, got {self.P}")
        mu0 = np.asarray(self.mu0)
        if mu0.shape != (2,) or np.any(mu0 < 0) or abs(mu0.sum() - 1) > 1e-12:
            raise ConfigError(f"mu0 must be a probability pair, got {self.mu0}")
        if self.preamble_init not in ("prior", "track", "ls"):
            raise ConfigError(f"preamble_init must be 'prior', 'track' or 'ls', got {self.preamble_init!r}")
        if self.imm_mixing not in ("basis", "shared"):
            raise ConfigError(f"imm_mixing must be 'basis' or 'shared', got {self.imm_mixing!r}")
        if not 0 <= self.ar_rcond < 1:
            raise ConfigError(f"ar_rcond must lie in [0, 1), got {self.ar_rcond}")
        if self.ar_loading < 0:
            raise ConfigError(f"ar_loading must be non-negative, got {self.ar_loading}")
        if self.switch_mode not in ("continuous", "fresh"):
            raise ConfigError(f"switch_mode must be 'continuous' or 'fresh', got {self.switch_mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def L(self) -> int:
        return len(self.pdp_db)

    @property
    def Ns(self) -> int:
        return self.N + self.Ng

    @property
    def concat_Nc(self) -> int:
        low = {m - (self.Nc - 1) // 2 for m in range(self.Nc)}
        high = {2 * m - (self.Nc - 1) for m in range(self.Nc)}
        return len(low | high)

    @property
    def doppler_hz(self) -> float:
        if self.fd_hz is not None:
            return float(self.fd_hz)
        return self.normalized_doppler / (self.Ns * self.Ts)

    @property
    def constellation_obj(self) -> Constellation:
        return Constellation.of(Modulation(self.constellation.lower()))

    def with_(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ebn0_grid_db"] = list(self.ebn0_grid_db)
        d["pdp_db"] = list(self.pdp_db)
        d["P"] = [list(r) for r in self.P]
        d["mu0"] = list(self.mu0)
        return d


def load_config(path) -> SimConfig:
    """Read a YAML mapping whose keys are exactly (a subset of) SimConfig fields."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(map(str, unknown))}")
    try:
        return SimConfig(**raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value in {path}: {exc}") from exc
