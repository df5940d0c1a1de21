"""Steady states and stability analysis.

Covers the nodal steady amplitude of the 1D ``D = 0`` problem, stationary
patterns of the ``D = 0`` system in any dimension, the leading generalized
eigenvalue governing the stability of the zero conductance, and linear
stability runs around stationary patterns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (initial_state, linearized_zero_step, pattern_linear_pressure,
                       pattern_linear_rhs, pattern_step_limit, step)
from .energy import decay_rate_estimate
from .elliptic import PressureSolve, StationaryPressure, solve_stationary_pressure_d0
from .errors import DegenerateSpectrum, HypothesisViolation, NonConvergence
from .grid import (Grid, corner_dot, dirichlet_form, l2_norm, laplacian, node_norm,
                   top_eigenpair)
from .linalg import pcg
from .params import ModelParams
from .pattern import PatternSpec
from .rng import Prng


# -- 1D steady amplitude ------------------------------------------------------
def steady_amplitude_1d(B, params: ModelParams, tol: float = 1e-12):
    """Nonnegative steady amplitude of ``dm/dt = (c^2 B^2/(1+m^2)^2 - |m|^{2(gamma-1)}) m``.

    For ``gamma > 1`` this is the root of
    ``g(m) = c^2 B^2 - m^{2(gamma-1)} (1 + m^2)^2``, found by bisection to
    absolute tolerance ``tol`` after growing the upper bracket geometrically.
    For ``gamma = 1`` it is ``sqrt(c |B| - 1)`` where ``c |B| > 1`` and zero
    elsewhere.  Accepts scalars or arrays.
    """
    scalar = np.ndim(B) == 0
    B = np.abs(np.asarray(B, dtype=float))
    c = params.c
    if params.gamma == 1:
        out = np.sqrt(np.maximum(c * B - 1.0, 0.0))
        return float(out) if scalar else out
    target = (c * B) ** 2
    e = 2.0 * (params.gamma - 1.0)

    def g(m):
        return target - m ** e * (1.0 + m ** 2) ** 2

    lo = np.zeros_like(B)
    hi = np.ones_like(B)
    while np.any(g(hi) > 0):
        hi = np.where(g(hi) > 0, 2.0 * hi, hi)
    while True:
        mid = 0.5 * (lo + hi)
        # stop once the bracket is tight or cannot be split in floating point
        if np.all((hi - lo <= tol) | (mid <= lo) | (mid >= hi)):
            break
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    out = np.where(target > 0, 0.5 * (lo + hi), 0.0)
    return float(out) if scalar else out


# -- stationary patterns ------------------------------------------------------
@dataclass
class StationaryPattern:
    pattern: PatternSpec
    m0: np.ndarray
    pressure: PressureSolve
    solve: StationaryPressure

    @property
    def grid(self) -> Grid:
        return self.pattern.grid


def construct_pattern_d0(pattern: PatternSpec, params: ModelParams, S,
                         tol: float = 1e-10) -> StationaryPattern:
    """Stationary conductance of the ``D = 0`` system for a sign pattern.

    The pressure minimizes :class:`nflab.elliptic.PatternFunctional`.  At each
    node the conductance points along the leading eigenvector ``v`` of the
    gradient tensor (oriented with the central gradient), with magnitude
    ``(c^2 lambda)^{1/(2(gamma-1))}`` and the prescribed sign; it vanishes where
    the tensor does.
    """
    solve = solve_stationary_pressure_d0(pattern, params, S, tol=tol)
    p0 = solve.pressure
    lam, v = top_eigenpair(p0.tensor)
    orient = np.sign(np.sum(v * p0.gradp, axis=0))
    v = v * np.where(orient < 0, -1.0, 1.0)
    size = np.power(params.c ** 2 * np.maximum(lam, 0.0), 1.0 / (2.0 * (params.gamma - 1.0)))
    m0 = pattern.signs * size * v
    return StationaryPattern(pattern, m0, p0, solve)


def stationarity_residual(grid: Grid, m0, p0: PressureSolve, params: ModelParams) -> float:
    """Largest nodal ``|c^2 (m.grad p) grad p - |m|^{2(gamma-1)} m|`` relative to the pumping scale."""
    c2 = params.c ** 2
    pump = c2 * np.einsum("ab...,b...->a...", p0.tensor, m0)
    size2 = np.sum(m0 ** 2, axis=0)
    metab = (np.ones_like(size2) if params.gamma == 1 else size2 ** (params.gamma - 1)) * m0
    scale = max(float(np.max(node_norm(pump))), np.finfo(float).tiny)
    return float(np.max(node_norm(pump - metab))) / scale


def one_step_drift(pattern: StationaryPattern, params: ModelParams, S, dt=None) -> float:
    """Relative max-norm change of ``m0`` after one ``D = 0`` step, on nodes with nonzero gradient."""
    prm = params.with_(D=0.0)
    grid = pattern.grid
    state = initial_state(grid, pattern.m0, S, prm)
    new = step(state, S, prm, dt=dt)
    lam, _ = top_eigenpair(pattern.pressure.tensor)
    mask = lam > 0
    scale = float(np.max(node_norm(pattern.m0)[mask]))
    return float(np.max(node_norm(new.m - pattern.m0)[mask])) / scale


# -- leading generalized eigenvalue ------------------------------------------
@dataclass
class SpectralResult:
    """Leading eigenpair of ``-Lap n = mu (grad p0 grad p0^T) n``.

    ``sigma1 = 1 / mu_min`` is the largest ratio
    ``int |grad p0 . n|^2 / int |grad n|^2``; ``beta_star = 1 / sigma1``.
    """

    sigma1: float
    beta_star: float
    eigenfield: np.ndarray
    iterations: int
    residual: float


def stiffness_norm2(grid: Grid, n) -> float:
    return sum(dirichlet_form(grid, nk) for nk in n)


def rayleigh_quotient(grid: Grid, n, p0: PressureSolve) -> float:
    """``int |grad p0 . n|^2 / int |grad n|^2`` with corner-averaged numerator."""
    num = grid.weight * float(np.sum(np.mean(corner_dot(n, p0.corners) ** 2, axis=0)))
    return num / stiffness_norm2(grid, n)


def sigma1(p0: PressureSolve, tol: float = 1e-13, max_iter: int = 10_000,
           seed: int = 12345) -> SpectralResult:
    """Power iteration for the leading generalized eigenvalue.

    Each iteration solves ``-Lap w = (grad p0 grad p0^T) n`` by CG and
    renormalizes in the Dirichlet energy.  Stops once the Rayleigh quotient
    changes by at most ``tol`` relatively.

    Raises
    ------
    DegenerateSpectrum
        If the eigenvalue is at most ``1e-14`` (e.g. ``p0 = 0``).
    NonConvergence
        After ``max_iter`` iterations.
    """
    grid = p0.grid
    T = p0.tensor
    n = Prng(seed).uniform((grid.dim,) + grid.shape)
    n /= np.sqrt(stiffness_norm2(grid, n))
    diag = np.full(n.shape, 2.0 * grid.dim / grid.h ** 2)
    sigma = rayleigh_quotient(grid, n, p0)
    for it in range(1, max_iter + 1):
        rhs = np.einsum("ab...,b...->a...", T, n)
        if not np.any(rhs):
            raise DegenerateSpectrum("pressure gradient vanishes identically")
        w, _, _ = pcg(lambda u: -laplacian(grid, u), rhs, diag, x0=sigma * n, tol=1e-12)
        n = w / np.sqrt(stiffness_norm2(grid, w))
        new = rayleigh_quotient(grid, n, p0)
        change = abs(new - sigma) / max(abs(new), np.finfo(float).tiny)
        sigma = new
        if change <= tol:
            break
    else:
        raise NonConvergence(f"power iteration did not settle in {max_iter} iterations",
                             max_iter, change)
    if sigma <= 1e-14:
        raise DegenerateSpectrum(f"leading eigenvalue {sigma:.3e} is numerically zero")
    rhs = np.einsum("ab...,b...->a...", T, n)
    resid = l2_norm(grid, -laplacian(grid, n) * sigma - rhs) / max(l2_norm(grid, rhs), 1e-300)
    return SpectralResult(sigma, 1.0 / sigma, n, it, resid)


def classify_zero_state(beta: float, result: SpectralResult, deadband: float = 1e-9) -> str:
    """``"stable"``, ``"neutral"`` or ``"unstable"`` according to ``beta`` versus ``beta_star``."""
    rel = (beta - result.beta_star) / result.beta_star
    if abs(rel) <= deadband:
        return "neutral"
    return "stable" if rel < 0 else "unstable"


def growth_trace(beta: float, p0: PressureSolve, params: ModelParams, T: float,
                 seed: int = 2024):
    """Evolve the zero-state linearization from seeded noise; returns times and norms."""
    grid = p0.grid
    n = Prng(seed).uniform((grid.dim,) + grid.shape)
    t, dt = 0.0, params.dt0
    times, norms = [0.0], [l2_norm(grid, n)]
    while t < T * (1 - 1e-14):
        h = min(dt, T - t)
        n = linearized_zero_step(grid, n, p0, params, h, beta=beta)
        t += h
        times.append(t)
        norms.append(l2_norm(grid, n))
        dt = min(1.2 * dt, params.dt_max)
    return np.array(times), np.array(norms)


def measure_growth_rate(beta: float, p0: PressureSolve, params: ModelParams, T: float,
                        seed: int = 2024) -> float:
    """Exponential growth rate of the zero-state linearization at ``beta``."""
    times, norms = growth_trace(beta, p0, params, T, seed)
    return decay_rate_estimate(times, norms)


# -- linear stability of patterns ---------------------------------------------
@dataclass
class StabilityReport:
    times: np.ndarray
    n_l2sq: np.ndarray
    gradq_l2sq: np.ndarray
    ratio_n: float
    ratio_gradq: float
    identity_defect: float
    dt: float


def critical_nodes(p0: PressureSolve, rel: float = 1e-12) -> np.ndarray:
    """Nodes where the pressure gradient tensor vanishes."""
    lam, _ = top_eigenpair(p0.tensor)
    return lam <= rel * float(np.max(lam))


def admissible_perturbation(pattern: StationaryPattern, seed: int, amplitude: float = 1.0,
                            cutoff: float = 0.2) -> np.ndarray:
    """Seeded noise switched off where ``|grad p0|`` is below ``cutoff`` times its maximum."""
    grid = pattern.grid
    lam, _ = top_eigenpair(pattern.pressure.tensor)
    size = np.sqrt(np.maximum(lam, 0.0))
    mask = size >= cutoff * float(np.max(size))
    return Prng(seed).uniform((grid.dim,) + grid.shape, amplitude) * mask


def linear_identity_defect(grid: Grid, n, q: PressureSolve, m0, p0: PressureSolve) -> float:
    """Relative defect of ``int (m0.grad q)(n.grad p0) + (m0.grad p0)(n.grad q) = -int |grad q|^2 + |m0.grad q|^2``."""
    g0, gq = p0.corners, q.corners
    lhs = grid.weight * float(np.sum(np.mean(
        corner_dot(m0, gq) * corner_dot(n, g0) + corner_dot(m0, g0) * corner_dot(n, gq), axis=0)))
    rhs = -(dirichlet_form(grid, q.p)
            + grid.weight * float(np.sum(np.mean(corner_dot(m0, gq) ** 2, axis=0))))
    return abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300)


def verify_pattern_stability(pattern: StationaryPattern, nI, params: ModelParams, T: float,
                             check_hypotheses: bool = True) -> StabilityReport:
    """Run the linearization around a ``D = 0`` pattern and report decay ratios.

    Returns the ratios ``||n(T)||^2 / ||n(0)||^2`` and
    ``||grad q(T)||^2 / ||grad q(0)||^2`` (zero when the trajectory is
    identically zero).

    Raises
    ------
    HypothesisViolation
        If the pattern has zero-sign nodes, or ``nI`` is nonzero where the
        pressure gradient vanishes (unless ``check_hypotheses`` is false).
    """
    grid = pattern.grid
    nI = grid.check_vector(nI, "nI")
    p0, m0 = pattern.pressure, pattern.m0
    if check_hypotheses:
        if pattern.pattern.measure_a0 > 0:
            raise HypothesisViolation(
                f"pattern has zero-sign nodes (fraction {pattern.pattern.measure_a0:.3g})")
        crit = critical_nodes(p0)
        scale = max(float(np.max(np.abs(nI))), 1e-300)
        if np.any(node_norm(nI)[crit] > 1e-12 * scale):
            raise HypothesisViolation("perturbation is nonzero where the pressure gradient vanishes")
    dt = pattern_step_limit(p0, params)
    n = nI.copy()
    q = pattern_linear_pressure(grid, n, m0, p0, params)
    times, nn, qq = [0.0], [l2_norm(grid, n) ** 2], [dirichlet_form(grid, q.p)]
    defect = linear_identity_defect(grid, n, q, m0, p0) if np.any(n) else 0.0
    t = 0.0
    while t < T * (1 - 1e-14):
        h = min(dt, T - t)
        n = n + h * pattern_linear_rhs(grid, n, q, m0, p0, params)
        t += h
        q = pattern_linear_pressure(grid, n, m0, p0, params, x0=q.p)
        if np.any(n):
            defect = max(defect, linear_identity_defect(grid, n, q, m0, p0))
        times.append(t)
        nn.append(l2_norm(grid, n) ** 2)
        qq.append(dirichlet_form(grid, q.p))
    nn, qq = np.array(nn), np.array(qq)
    rn = nn[-1] / nn[0] if nn[0] > 0 else 0.0
    rq = qq[-1] / qq[0] if qq[0] > 0 else 0.0
    return StabilityReport(np.array(times), nn, qq, float(rn), float(rq), defect, dt)
