"""Time stepping for the network model and its linearizations.

The conductance update is semi-implicit: diffusion and the metabolic term
(with frozen coefficient ``|m^k|^{2(gamma-1)}``) are implicit, pumping is
explicit.  Because pumping, pressure operator and energy share the corner
gradients of :mod:`nflab.grid`, the spatially discrete system is an exact
gradient flow of the discrete energy, and each accepted step is checked to
not increase it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic import (PressureSolve, _full_cumulative, _pressure, anisotropic_diagonal,
                       apply_anisotropic, cumulative_source, dirichlet_flux_constant,
                       solve_pressure, solve_pressure_mollified)
from .energy import EnergyBreakdown, energy, energy_mollified
from .errors import StepCollapse
from .grid import (Grid, corner_adjoint, corner_dot, l2_norm, laplacian, node_norm,
                   top_eigenpair, total_variation_1d)
from .linalg import pcg
from .mollifier import KernelStencil, convolve, heat_kernel
from .params import ModelParams

ENERGY_SLACK = 1e-12
DT_FLOOR = 1e-12
DT_GROWTH = 1.2


class Variant(str, enum.Enum):
    STANDARD = "standard"
    SIGN_FLIPPED = "sign_flipped"
    MOLLIFIED = "mollified"


@dataclass
class SimState:
    """Accepted state of a run.

    ``monitor`` is the quantity required not to grow: the energy for the
    standard and mollified variants, ``||m||^2 / 2`` for the sign-flipped one.
    ``rejected`` lists ``(dt, monitor)`` of attempts discarded before this
    state was accepted.
    """

    t: float
    m: np.ndarray
    pressure: PressureSolve
    dt: float
    energy: EnergyBreakdown
    monitor: float
    reference: float
    dtm_l2: float = float("nan")
    rejected: list = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.pressure.grid


@dataclass(frozen=True)
class TraceRow:
    t: float
    dt: float
    accepted: bool
    energy: EnergyBreakdown
    m_l2: float
    dtm_l2: float
    tv: float


@dataclass
class SimTrace:
    grid: Grid
    variant: Variant
    rows: list = field(default_factory=list)

    def accepted(self) -> list[TraceRow]:
        return [r for r in self.rows if r.accepted]

    def column(self, name: str, accepted_only: bool = True) -> np.ndarray:
        rows = self.accepted() if accepted_only else self.rows
        if name in ("diffusion", "metabolic", "pumping", "pressure", "total"):
            return np.array([getattr(r.energy, name) for r in rows])
        return np.array([getattr(r, name) for r in rows], dtype=float)


# -- local terms -----------------------------------------------------------
def metabolic_coefficient(m, gamma: float) -> np.ndarray:
    """``|m|^{2(gamma-1)}`` per node (identically one for ``gamma = 1``)."""
    if gamma == 1:
        return np.ones(m.shape[1:])
    return np.sum(m ** 2, axis=0) ** (gamma - 1.0)


def pumping_term(m, pressure: PressureSolve, c: float) -> np.ndarray:
    """``c^2 (m . grad p) grad p``, averaged over corner gradients."""
    g = pressure.corners
    return c ** 2 * np.mean(corner_dot(m, g)[:, None] * g, axis=0)


def mollified_pumping_term(m, pressure: PressureSolve, c: float,
                           kernel: KernelStencil) -> np.ndarray:
    """``c^2 [(m . grad p) * eta] grad p``, averaged over corner gradients."""
    g = pressure.corners
    smooth = convolve(kernel, corner_dot(m, g))
    return c ** 2 * np.mean(smooth[:, None] * g, axis=0)


def reaction_terms(grid: Grid, m, pressure: PressureSolve, params: ModelParams):
    """Return ``(pumping, metabolic)`` vector fields."""
    m = grid.check_vector(m, "m")
    return (pumping_term(m, pressure, params.c),
            metabolic_coefficient(m, params.gamma) * m)


def implicit_update(grid: Grid, rhs, coef, dt: float, D: float, tol: float = 1e-12,
                    tensor=None, x0=None) -> np.ndarray:
    """Solve ``(1 + dt coef) u + dt T u - dt D^2 Lap u = rhs`` for a vector field.

    ``T`` is an optional nodal tensor field (shape ``(dim, dim) + shape``).
    Without diffusion and tensor the solve is a pointwise division.
    """
    diag = 1.0 + dt * coef
    if D == 0 and tensor is None:
        return rhs / diag

    def apply(u):
        out = diag * u
        if D:
            out = out - dt * D ** 2 * laplacian(grid, u)
        if tensor is not None:
            out = out + dt * np.einsum("ab...,b...->a...", tensor, u)
        return out

    pre = np.broadcast_to(diag, rhs.shape) + dt * D ** 2 * 2 * grid.dim / grid.h ** 2
    if tensor is not None:
        pre = pre + dt * np.stack([tensor[a, a] for a in range(grid.dim)])
    u, _, _ = pcg(apply, rhs, pre, x0=rhs if x0 is None else x0, tol=tol)
    return u


# -- full model ------------------------------------------------------------
class _Model:
    """Variant-specific pressure solve, energy and monitor."""

    def __init__(self, grid, S, params, variant, kernel=None):
        self.grid = grid
        self.S = grid.check_scalar(S, "S")
        self.params = params
        self.variant = Variant(variant)
        if self.variant is Variant.MOLLIFIED and kernel is None:
            kernel = heat_kernel(grid, params.epsilon)
        self.kernel = kernel

    def pressure(self, m, x0=None):
        if self.variant is Variant.MOLLIFIED:
            return solve_pressure_mollified(self.grid, m, self.S, self.kernel,
                                            tol=self.params.cg_tol, x0=x0)
        return solve_pressure(self.grid, m, self.S, tol=self.params.cg_tol, x0=x0)

    def energy(self, m, pressure):
        if self.variant is Variant.MOLLIFIED:
            return energy_mollified(self.grid, m, pressure, self.params, self.kernel)
        return energy(self.grid, m, pressure, self.params)

    def monitor(self, m, en):
        if self.variant is Variant.SIGN_FLIPPED:
            return 0.5 * l2_norm(self.grid, m) ** 2
        return en.total

    def propose(self, m, pressure, dt):
        prm = self.params
        coef = metabolic_coefficient(m, prm.gamma)
        if self.variant is Variant.SIGN_FLIPPED:
            tensor = prm.c ** 2 * pressure.tensor
            return implicit_update(self.grid, m, coef, dt, prm.D, prm.cg_tol, tensor=tensor)
        if self.variant is Variant.MOLLIFIED:
            pump = mollified_pumping_term(m, pressure, prm.c, self.kernel)
        else:
            pump = pumping_term(m, pressure, prm.c)
        return implicit_update(self.grid, m + dt * pump, coef, dt, prm.D, prm.cg_tol)

    def state(self, t, m, dt, reference=None, x0=None):
        pressure = self.pressure(m, x0=x0)
        en = self.energy(m, pressure)
        mon = self.monitor(m, en)
        return SimState(t, m, pressure, dt, en, mon, mon if reference is None else reference)


def initial_state(grid: Grid, mI, S, params: ModelParams, variant=Variant.STANDARD,
                  kernel: KernelStencil | None = None) -> SimState:
    model = _Model(grid, S, params, variant, kernel)
    return model.state(0.0, grid.check_vector(mI, "mI").copy(), params.dt0)


def _advance(model: _Model, state: SimState, dt: float | None = None) -> SimState:
    prm = model.params
    dt = state.dt if dt is None else dt
    rejected = []
    while True:
        m_new = model.propose(state.m, state.pressure, dt)
        new = model.state(state.t + dt, m_new, state.dt, state.reference,
                          x0=state.pressure.p)
        slack = ENERGY_SLACK * abs(state.reference)
        if np.all(np.isfinite(m_new)) and new.monitor <= state.monitor + slack:
            new.dt = min(DT_GROWTH * dt, prm.dt_max) if dt >= state.dt else state.dt
            new.dtm_l2 = l2_norm(model.grid, m_new - state.m) / dt
            new.rejected = rejected
            return new
        rejected.append((dt, new.monitor))
        dt *= 0.5
        state = replace(state, dt=min(state.dt, dt))
        if dt < DT_FLOOR * prm.dt0:
            raise StepCollapse(f"time step fell below {DT_FLOOR * prm.dt0:g} at t={state.t:g}")


def step(state: SimState, S, params: ModelParams, variant=Variant.STANDARD,
         kernel: KernelStencil | None = None, dt: float | None = None) -> SimState:
    """Advance one accepted step.

    Attempts whose monitor (energy, or ``||m||^2/2`` for the sign-flipped
    variant) grows by more than ``1e-12`` of the run's initial value are
    rejected and retried with half the step.  After acceptance the step
    grows by 1.2 up to ``dt_max``.

    Raises
    ------
    StepCollapse
        When the step falls below ``1e-12 dt0``.
    """
    model = _Model(state.grid, S, params, variant, kernel)
    return _advance(model, state, dt)


def step_sign_flipped(state, S, params, dt=None):
    """Step of the system with the pumping term moved to the dissipative side."""
    return step(state, S, params, Variant.SIGN_FLIPPED, dt=dt)


def step_mollified(state, S, params, kernel=None, dt=None):
    """Step of the mollified system, monitored by the mollified energy."""
    return step(state, S, params, Variant.MOLLIFIED, kernel=kernel, dt=dt)


def _row(grid, state, accepted=True, dt=None):
    tv = total_variation_1d(grid, state.m) if grid.dim == 1 else float("nan")
    return TraceRow(state.t, state.dt if dt is None else dt, accepted, state.energy,
                    l2_norm(grid, state.m), state.dtm_l2, tv)


def simulate(grid: Grid, mI, S, params: ModelParams, variant=Variant.STANDARD,
             kernel: KernelStencil | None = None, max_steps: int | None = None
             ) -> tuple[SimTrace, SimState]:
    """Integrate from ``mI`` until ``t_end`` or until ``||dm/dt|| < steady_tol``.

    Returns the trace (initial row, accepted rows and rejected attempts) and
    the final state.
    """
    model = _Model(grid, S, params, variant, kernel)
    state = model.state(0.0, grid.check_vector(mI, "mI").copy(), params.dt0)
    trace = SimTrace(grid, model.variant, [_row(grid, state, dt=0.0)])
    t_end = params.t_end
    steps = 0
    while state.t < t_end * (1 - 1e-14):
        dt = min(state.dt, t_end - state.t)
        new = _advance(model, state, dt)
        for dt_rej, _ in new.rejected:
            trace.rows.append(TraceRow(state.t + dt_rej, dt_rej, False, state.energy,
                                       l2_norm(grid, state.m), float("nan"), float("nan")))
        trace.rows.append(_row(grid, new, dt=new.t - state.t))
        state = new
        steps += 1
        if state.dtm_l2 < params.steady_tol:
            break
        if max_steps is not None and steps >= max_steps:
            break
    return trace, state


# -- D = 0, one dimension ---------------------------------------------------
def ode_rhs_d0_1d(m, B, params: ModelParams):
    """Right-hand side ``(c^2 B^2 / (1 + m^2)^2 - |m|^{2(gamma-1)}) m``."""
    m = np.asarray(m, dtype=float)
    B = np.asarray(B, dtype=float)
    power = np.ones_like(m) if params.gamma == 1 else np.abs(m) ** (2 * (params.gamma - 1))
    return (params.c ** 2 * B ** 2 / (1 + m ** 2) ** 2 - power) * m


def run_d0_1d(grid: Grid, mI, S, params: ModelParams, t_end: float, bc: str = "mixed"):
    """Classical RK4 with fixed step ``dt0`` for the decoupled nodal ODEs.

    With ``bc="mixed"`` the flux is ``-B / (1 + m^2)`` and the nodes evolve
    independently.  With ``bc="dirichlet"`` the effective flux ``B - B*(m)``
    is recomputed at every stage.
    """
    if grid.dim != 1:
        raise ValueError("run_d0_1d requires a 1D grid")
    m = np.asarray(mI, dtype=float).reshape(grid.n).copy()
    B = cumulative_source(grid, S).B
    if bc == "mixed":
        def rhs(u):
            return ode_rhs_d0_1d(u, B, params)
    elif bc == "dirichlet":
        F = _full_cumulative(grid, S)

        def rhs(u):
            return ode_rhs_d0_1d(u, B - dirichlet_flux_constant(grid, u, F), params)
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    t = 0.0
    while t < t_end * (1 - 1e-14):
        dt = min(params.dt0, t_end - t)
        k1 = rhs(m)
        k2 = rhs(m + 0.5 * dt * k1)
        k3 = rhs(m + 0.5 * dt * k2)
        k4 = rhs(m + dt * k3)
        m = m + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return m.reshape(1, grid.n)


# -- linearizations ----------------------------------------------------------
def linearized_zero_step(grid: Grid, n, p0: PressureSolve, params: ModelParams,
                         dt: float, beta: float | None = None) -> np.ndarray:
    """One step of ``dn/dt = D^2 (Lap n + beta grad p0 (grad p0 . n))``.

    The Laplacian is implicit, the rank-one term explicit.
    """
    beta = params.beta if beta is None else beta
    n = grid.check_vector(n, "n")
    D2 = params.D ** 2
    growth = np.einsum("ab...,b...->a...", p0.tensor, n)
    rhs = n + dt * D2 * beta * growth
    return implicit_update(grid, rhs, np.zeros(grid.shape), dt, params.D, params.cg_tol)


def pattern_linear_pressure(grid: Grid, n, m0, p0: PressureSolve, params: ModelParams,
                            x0=None) -> PressureSolve:
    """Pressure perturbation ``q`` induced by the conductance perturbation ``n``.

    Solves ``-div[(I + m0 m0^T) grad q] = div[(m0 n^T + n m0^T) grad p0]``,
    with the right-hand side assembled from the same corner quadrature.
    """
    g0 = p0.corners
    w = (corner_dot(n, g0)[:, None] * m0[None] + corner_dot(m0, g0)[:, None] * n[None])
    rhs = -corner_adjoint(grid, w)
    q, its, res = pcg(lambda x: apply_anisotropic(grid, m0, x), rhs,
                      anisotropic_diagonal(grid, m0), x0=x0, tol=params.cg_tol,
                      maxiter=50 * grid.size)
    return _pressure(grid, q, its, res)


def pattern_linear_rhs(grid: Grid, n, q: PressureSolve, m0, p0: PressureSolve,
                       params: ModelParams) -> np.ndarray:
    """Time derivative of the linearized conductance around a D = 0 pattern."""
    c2 = params.c ** 2
    g0 = p0.corners
    gq = q.corners
    drive = np.mean(corner_dot(n, g0)[:, None] * g0
                    + corner_dot(m0, gq)[:, None] * g0
                    + corner_dot(m0, g0)[:, None] * gq, axis=0)
    size = node_norm(m0)
    power = metabolic_coefficient(m0, params.gamma)
    unit = np.divide(m0, size, out=np.zeros_like(m0), where=size > 0)
    along = np.sum(unit * n, axis=0) * unit
    if params.gamma != 1:
        power = np.where(size > 0, power, 0.0)
    return c2 * drive - power * n - 2 * (params.gamma - 1) * power * along


def linearized_pattern_step(grid: Grid, n, m0, p0: PressureSolve, params: ModelParams,
                            dt: float, q_guess=None):
    """Explicit Euler step of the linearization around a stationary pattern.

    Returns ``(n_new, q)`` where ``q`` is the pressure perturbation of ``n``.
    """
    n = grid.check_vector(n, "n")
    q = pattern_linear_pressure(grid, n, m0, p0, params, x0=q_guess)
    return n + dt * pattern_linear_rhs(grid, n, q, m0, p0, params), q


def pattern_step_limit(p0: PressureSolve, params: ModelParams) -> float:
    """Stable explicit step ``0.5 / max(c^2 |grad p0|^2)`` (scaled for gamma > 2)."""
    lam, _ = top_eigenpair(p0.tensor)
    top = params.c ** 2 * float(np.max(lam)) * max(1.0, params.gamma - 1.0)
    return 0.5 / top if top > 0 else params.dt_max
