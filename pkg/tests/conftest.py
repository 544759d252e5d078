import numpy as np
import pytest

from elasticfda.funcrep import Grid, SampledFunction
from elasticfda.srsf import Srsf
from elasticfda.warpspace import Warp


def random_smooth(rng, grid, n_terms=4, scale=1.0):
    """Random trigonometric polynomial sampled on ``grid``."""
    t = grid.points
    out = rng.normal(0, scale)
    for k in range(1, n_terms + 1):
        out = out + rng.normal(0, scale / k) * np.sin(2 * np.pi * k * t + rng.uniform(0, 2 * np.pi))
    return out * np.ones_like(t)


def random_warp(rng, grid, strength=1.0):
    """Smooth random warp: normalised integral of a positive density."""
    t = grid.points
    dens = np.exp(strength * random_smooth(rng, grid, n_terms=3, scale=0.4))
    gam = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
    gam /= gam[-1]
    gam[0], gam[-1] = 0.0, 1.0
    return Warp(grid, gam)


def random_srsf(rng, grid):
    return Srsf(grid, random_smooth(rng, grid), rng.normal())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit101():
    return Grid(0.0, 1.0, 101)


def fn(grid, f):
    return SampledFunction(grid, f(grid.points))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
