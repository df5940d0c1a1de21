import numpy as np
import pytest

from nflab.grid import Grid
from nflab.rng import Prng


@pytest.fixture
def grid1():
    return Grid(1, 31)


@pytest.fixture
def grid2():
    return Grid(2, 12)


def random_vector(grid, seed, amplitude=1.0):
    return Prng(seed).uniform((grid.dim,) + grid.shape, amplitude)


def random_scalar(grid, seed, amplitude=1.0):
    return Prng(seed).uniform(grid.shape, amplitude)


def assemble(apply, shape):
    """Dense matrix of a linear map on arrays of ``shape``."""
    size = int(np.prod(shape))
    cols = []
    for k in range(size):
        e = np.zeros(size)
        e[k] = 1.0
        cols.append(np.asarray(apply(e.reshape(shape))).ravel())
    return np.array(cols).T


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=int):
        passed, detail = mod.RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
