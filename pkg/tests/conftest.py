import numpy as np
import pytest

from thermostat.model import BandSpec, CouplingBlockSpec, ModelSpec, SystemSpec


def small_two_band(N=6, lam=0.02, width=0.5, gap=3.0, full=True):
    pairs = [(0, 0), (0, 1), (1, 0), (1, 1)] if full else [(1, 0)]
    return ModelSpec(SystemSpec((0.0, gap)), (BandSpec(0.0, width, N), BandSpec(gap, width, N)),
                     tuple(CouplingBlockSpec((0, 1), ab, lam) for ab in pairs), name="small")


@pytest.fixture
def small_model():
    return small_two_band()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
