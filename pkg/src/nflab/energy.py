"""Energy functional, dissipation diagnostics and decay-rate fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import PressureSolve
from .grid import Grid, corner_dot, dirichlet_form, integrate
from .mollifier import KernelStencil, positivity_check
from .params import ModelParams


@dataclass(frozen=True)
class EnergyBreakdown:
    """The four nonnegative summands of the network energy."""

    diffusion: float
    metabolic: float
    pumping: float
    pressure: float

    @property
    def total(self) -> float:
        return self.diffusion + self.metabolic + self.pumping + self.pressure


def _local_terms(grid, m, params):
    diffusion = 0.5 * params.D ** 2 * sum(dirichlet_form(grid, mk) for mk in m)
    m2 = np.sum(m ** 2, axis=0)
    metabolic = 0.5 * integrate(grid, m2 ** params.gamma) / params.gamma
    return diffusion, metabolic


def energy(grid: Grid, m, pressure: PressureSolve, params: ModelParams) -> EnergyBreakdown:
    r"""Evaluate

    .. math::
        E = \tfrac12\int D^2|\nabla m|^2 + \frac{|m|^{2\gamma}}{\gamma}
            + c^2 |m\cdot\nabla p|^2 + c^2|\nabla p|^2 .

    Gradients of ``m`` and ``p`` in the quadratic terms use face differences;
    ``|m . grad p|^2`` is the corner average used by the pressure operator,
    so that pumping plus pressure equals ``c^2/2 (S, p)`` at a solution.
    """
    m = grid.check_vector(m, "m")
    diffusion, metabolic = _local_terms(grid, m, params)
    c2 = params.c ** 2
    mg = corner_dot(m, pressure.corners)
    pumping = 0.5 * c2 * grid.weight * float(np.sum(np.mean(mg ** 2, axis=0)))
    press = 0.5 * c2 * dirichlet_form(grid, pressure.p)
    return EnergyBreakdown(diffusion, metabolic, pumping, press)


def energy_mollified(grid: Grid, m, pressure: PressureSolve, params: ModelParams,
                     kernel: KernelStencil) -> EnergyBreakdown:
    """Energy with the pumping summand ``c^2/2 <(m.grad p) * eta, m.grad p>``."""
    m = grid.check_vector(m, "m")
    diffusion, metabolic = _local_terms(grid, m, params)
    c2 = params.c ** 2
    mg = corner_dot(m, pressure.corners)
    pumping = 0.5 * c2 * float(np.mean([positivity_check(kernel, u) for u in mg]))
    press = 0.5 * c2 * dirichlet_form(grid, pressure.p)
    return EnergyBreakdown(diffusion, metabolic, pumping, press)


def _accepted_columns(trace):
    rows = [r for r in trace.rows if r.accepted]
    t = np.array([r.t for r in rows])
    e = np.array([r.energy.total for r in rows])
    rate = np.array([r.dtm_l2 for r in rows])
    return t, e, rate


def dissipation_residual(trace, tiny: float = 1e-300) -> float:
    """Largest relative defect of the discrete dissipation law.

    For consecutive accepted rows returns
    ``max |dE + dt ||dm/dt||^2| / (|dE| + tiny)``, where ``||dm/dt||`` is the
    realized rate of the later row.  A constant trace gives 0.
    """
    t, e, rate = _accepted_columns(trace)
    if len(t) < 2:
        return 0.0
    de = np.diff(e)
    dt = np.diff(t)
    defect = np.abs(de + dt * rate[1:] ** 2)
    return float(np.max(defect / (np.abs(de) + tiny)))


def cumulative_dissipation(trace) -> tuple[float, float]:
    """``E(0) - E(T)`` and the time integral of ``||dm/dt||^2`` over accepted steps."""
    t, e, rate = _accepted_columns(trace)
    if len(t) < 2:
        return 0.0, 0.0
    return float(e[0] - e[-1]), float(np.sum(np.diff(t) * rate[1:] ** 2))


def decay_rate_estimate(times, norms=None) -> float:
    """Least-squares slope of ``log ||.||`` against ``t`` over the trailing half.

    Parameters
    ----------
    times : array_like or trace
        Sample times, or a trace whose accepted rows supply ``t`` and the
        L2 norm of ``m``.
    norms : array_like, optional
        Norms matching ``times``.

    Raises
    ------
    ValueError
        With fewer than 10 samples or when a norm in the fitted window is
        not positive.
    """
    if norms is None:
        rows = [r for r in times.rows if r.accepted]
        times = [r.t for r in rows]
        norms = [r.m_l2 for r in rows]
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.shape != y.shape or t.size < 10:
        raise ValueError("decay-rate fit needs at least 10 samples")
    half = t.size // 2
    t, y = t[half:], y[half:]
    if not np.all(y > 0) or not np.all(np.isfinite(y)):
        raise ValueError("decay-rate fit needs positive finite norms")
    slope, _ = np.polyfit(t - t.mean(), np.log(y), 1)
    return float(slope)
