import numpy as np
import pytest

from skinspec.rendering import CameraSensitivity, build_pipeline
from skinspec.skin import SkinOptics
from skinspec.spectral import Spectrum, default_grid

# One line per headline guarantee, filled in by tests/test_acceptance.py and
# printed as a summary block after the run.
ACCEPTANCE_LINES: list[tuple[str, str, str]] = []


def record_criterion(name: str, status: str, detail: str) -> None:
    ACCEPTANCE_LINES.append((name, status, detail))


@pytest.fixture(scope="session")
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def optics(grid):
    return SkinOptics.build(grid)


@pytest.fixture(scope="session")
def flat_e(grid):
    return Spectrum(grid, np.full(grid.count, 1.0))


@pytest.fixture(scope="session")
def d65(grid):
    from skinspec.datafiles import load_d65
    from skinspec.spectral import resample

    spd = resample(load_d65(), grid)
    return Spectrum(grid, spd.values / spd.values.mean())


@pytest.fixture(scope="session")
def cmf_pipeline(grid, d65):
    return build_pipeline(CameraSensitivity.from_cie_cmf(grid), d65)
