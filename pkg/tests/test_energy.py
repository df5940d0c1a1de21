import numpy as np
import pytest

from conftest import random_scalar, random_vector
from nflab.dynamics import (SimTrace, TraceRow, Variant, metabolic_coefficient,
                            mollified_pumping_term, pumping_term)
from nflab.elliptic import solve_pressure, solve_pressure_mollified
from nflab.energy import (EnergyBreakdown, cumulative_dissipation, decay_rate_estimate,
                          dissipation_residual, energy, energy_mollified)
from nflab.grid import Grid, inner, laplacian
from nflab.mollifier import heat_kernel
from nflab.params import ModelParams


def _smooth_vector(g, seed):
    xs = g.coords()
    rnd = np.random.default_rng(seed).uniform(0.5, 1.5, size=(g.dim, 3))
    m = np.zeros((g.dim,) + g.shape)
    for a in range(g.dim):
        m[a] = rnd[a, 0] * np.sin(np.pi * xs[a]) * (1 + rnd[a, 1] * np.cos(2 * np.pi * xs[-1]))
    return m


def _force(g, m, S, prm, kernel=None):
    """Right-hand side of the conductance equation."""
    if kernel is None:
        pr = solve_pressure(g, m, S, tol=1e-14)
        pump = pumping_term(m, pr, prm.c)
    else:
        pr = solve_pressure_mollified(g, m, S, kernel, tol=1e-14)
        pump = mollified_pumping_term(m, pr, prm.c, kernel)
    diff = prm.D ** 2 * np.stack([laplacian(g, mk) for mk in m])
    return diff + pump - metabolic_coefficient(m, prm.gamma) * m


def _energy(g, m, S, prm, kernel=None):
    if kernel is None:
        return energy(g, m, solve_pressure(g, m, S, tol=1e-14), prm).total
    return energy_mollified(g, m, solve_pressure_mollified(g, m, S, kernel, tol=1e-14),
                            prm, kernel).total


@pytest.mark.parametrize("dim,gamma,mollify", [(1, 2.0, False), (1, 1.0, False),
                                               (2, 1.5, False), (1, 2.0, True)])
def test_force_is_negative_energy_gradient(dim, gamma, mollify):
    g = Grid(dim, 24 if dim == 1 else 10)
    prm = ModelParams(D=0.3, c=1.7, gamma=gamma)
    kernel = heat_kernel(g, 5e-3) if mollify else None
    m = _smooth_vector(g, 1)
    v = _smooth_vector(g, 2)
    S = 1.0 + 0.5 * g.sample(lambda *x: np.sin(np.pi * x[0]))
    d = 1e-5
    fd = (_energy(g, m + d * v, S, prm, kernel) - _energy(g, m - d * v, S, prm, kernel)) / (2 * d)
    exact = -inner(g, _force(g, m, S, prm, kernel), v)
    assert fd == pytest.approx(exact, rel=1e-6)


def test_summands_nonnegative_and_identity():
    g = Grid(2, 12)
    prm = ModelParams(D=0.1, c=2.0, gamma=2.0)
    m = random_vector(g, 3)
    S = random_scalar(g, 4)
    pr = solve_pressure(g, m, S)
    e = energy(g, m, pr, prm)
    assert min(e.diffusion, e.metabolic, e.pumping, e.pressure) >= 0
    assert e.total == pytest.approx(e.diffusion + e.metabolic + e.pumping + e.pressure)
    # pumping + pressure = c^2/2 (S, p) at the solution
    assert e.pumping + e.pressure == pytest.approx(0.5 * prm.c ** 2 * inner(g, S, pr.p), rel=1e-10)


def test_mollified_energy_reduces_to_standard():
    g = Grid(1, 31)
    prm = ModelParams(D=0.1)
    m = random_vector(g, 5)
    S = np.ones(31)
    k = heat_kernel(g, 1e-9)
    pr = solve_pressure(g, m, S)
    assert energy_mollified(g, m, pr, prm, k).total == pytest.approx(
        energy(g, m, pr, prm).total, rel=1e-14)


def _trace(ts, es, rates):
    zero = EnergyBreakdown(0, 0, 0, 0)
    rows = [TraceRow(t, 0.0, True, EnergyBreakdown(e, 0, 0, 0), 1.0, r, 0.0)
            for t, e, r in zip(ts, es, rates)]
    rows.insert(1, TraceRow(0.5, 0.1, False, zero, 1.0, np.nan, np.nan))
    return SimTrace(Grid(1, 3), Variant.STANDARD, rows)


def test_dissipation_residual_exact_law():
    # E(t) = exp(-t), rate^2 = -dE/dt evaluated consistently with backward differences
    ts = np.linspace(0, 1, 11)
    es = np.exp(-ts)
    rates = np.r_[np.nan, np.sqrt(-np.diff(es) / np.diff(ts))]
    tr = _trace(ts, es, rates)
    assert dissipation_residual(tr) == pytest.approx(0.0, abs=1e-12)
    drop, diss = cumulative_dissipation(tr)
    assert drop == pytest.approx(diss, rel=1e-12)


def test_dissipation_residual_detects_defect():
    ts = np.linspace(0, 1, 5)
    tr = _trace(ts, 1 - ts, np.r_[np.nan, np.full(4, np.sqrt(2.0))])
    assert dissipation_residual(tr) == pytest.approx(1.0)
    assert dissipation_residual(_trace([0.0], [1.0], [np.nan])) == 0.0


def test_decay_rate_estimate():
    t = np.linspace(0, 5, 40)
    assert decay_rate_estimate(t, 3 * np.exp(-2.5 * t)) == pytest.approx(-2.5, rel=1e-12)
    with pytest.raises(ValueError):
        decay_rate_estimate(t[:5], np.ones(5))
    with pytest.raises(ValueError):
        decay_rate_estimate(t, np.zeros(40))
