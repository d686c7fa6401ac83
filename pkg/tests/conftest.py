import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glauber_vlasov import Grid, Potential, compute_constants  # noqa: E402
from glauber_vlasov.hierarchy import ScalingRegime  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def coarse():
    """Small grid for brute-force comparisons."""
    grid = Grid(10.0, 8)
    pot = Potential("gaussian", 1.0, 0.9, 4.5, 10.0)
    return grid, pot, compute_constants(pot, grid)


@pytest.fixture(scope="session")
def medium():
    grid = Grid(10.0, 32)
    pot = Potential("gaussian", 1.0, 0.5, 4.5, 10.0)
    return grid, pot, compute_constants(pot, grid)


def default_regime(consts, **kw):
    c = kw.pop("c", 1.2)
    zmax = min(c * np.exp(-c * consts.beta), 2 * c * np.exp(-2 * c * consts.beta))
    return ScalingRegime(z=kw.pop("z", 0.9 * zmax), c=c, beta=consts.beta, **kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
