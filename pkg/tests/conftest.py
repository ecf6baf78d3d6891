import numpy as np
import pytest

from bemimm.bem import BasisKind, make_basis
from bemimm.channel import ChannelProfile
from bemimm.config import SimConfig
from bemimm.harness import build_models

# acceptance criteria append (number, passed, detail) here; printed after the run
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cfg():
    return SimConfig()


@pytest.fixture(scope="session")
def models(cfg):
    return build_models(cfg)


@pytest.fixture(scope="session")
def profile(cfg):
    return ChannelProfile(cfg.pdp_db, cfg.doppler_hz, cfg.Ts, cfg.Ns)


@pytest.fixture(scope="session")
def low64():
    return make_basis(BasisKind.LOW, 64, 3)


@pytest.fixture(scope="session")
def high64():
    return make_basis(BasisKind.HIGH, 64, 3)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_psd(rng, n, scale=1.0):
    G = crandn(rng, n, n)
    return scale * (G @ G.conj().T + 0.1 * np.eye(n))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
