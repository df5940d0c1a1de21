r"""Pressure solvers.

The anisotropic operator

.. math::
    -\nabla\cdot[(I + m\otimes m)\nabla p]

is discretized with bilinear (linear in 1D) elements and vertex quadrature.
Its quadratic form is

.. math::
    a_m(p, p) = \sum_{faces} h^d |D p|^2
              + \sum_{nodes} h^d \,\mathrm{mean}_c (m\cdot g_c)^2,

where ``g_c`` are the corner gradients of :mod:`nflab.grid`.  With ``m = 0``
it reduces to the standard five-point (three-point) stiffness operator.  All
linear systems are scaled by the lumped mass, so ``A_m p = S`` is solved
nodally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonConvergence
from .grid import (Grid, _shift, corner_adjoint, corner_dot, corner_gradients, dirichlet_form,
                   face_diff, gradient, gradient_tensor, inner, l2_norm, laplacian,
                   top_eigenpair)
from .linalg import pcg
from .mollifier import KernelStencil, convolve, heat_kernel
from .params import ModelParams
from .pattern import PatternSpec


@dataclass
class PressureSolve:
    """Pressure together with its gradients and solver diagnostics."""

    grid: Grid
    p: np.ndarray
    gradp: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    @cached_property
    def corners(self) -> np.ndarray:
        return corner_gradients(self.grid, self.p)

    @cached_property
    def tensor(self) -> np.ndarray:
        """Nodal gradient tensor ``mean_c g_c g_c^T``."""
        return gradient_tensor(self.corners)


def _pressure(grid, p, iterations=0, residual=0.0):
    return PressureSolve(grid, p, gradient(grid, p), iterations, residual)


# -- anisotropic operator ------------------------------------------------
def apply_anisotropic(grid: Grid, m, p) -> np.ndarray:
    """Mass-scaled product ``A_m p``."""
    m = grid.check_vector(m, "m")
    p = grid.check_scalar(p, "p")
    g = corner_gradients(grid, p)
    w = corner_dot(m, g)[:, None] * m[None]
    return -laplacian(grid, p) + corner_adjoint(grid, w)


def anisotropic_diagonal(grid: Grid, m) -> np.ndarray:
    """Exact diagonal of ``A_m`` (Jacobi preconditioner)."""
    h2 = grid.h ** 2
    diag = np.full(grid.shape, 2.0 * grid.dim) + np.sum(m ** 2, axis=0)
    for a in range(grid.dim):
        ma2 = m[a] ** 2
        diag += 0.5 * (_shift(ma2, grid, a, 1) + _shift(ma2, grid, a, -1))
    return diag / h2


def solve_pressure(grid: Grid, m, S, tol: float = 1e-12, x0=None,
                   maxiter: int | None = None) -> PressureSolve:
    """Solve ``-div[(I + m m^T) grad p] = S`` with ``p = 0`` on the boundary.

    Raises
    ------
    NonConvergence
        If CG needs more than ``50 n^dim`` iterations.
    """
    m = grid.check_vector(m, "m")
    S = grid.check_scalar(S, "S")
    diag = anisotropic_diagonal(grid, m)
    p, its, res = pcg(lambda x: apply_anisotropic(grid, m, x), S, diag,
                      x0=x0, tol=tol, maxiter=maxiter or 50 * grid.size)
    return _pressure(grid, p, its, res)


def pressure_energy(grid: Grid, m, p) -> float:
    """Quadrature of ``|grad p|^2 + |m . grad p|^2`` consistent with ``A_m``."""
    g = corner_gradients(grid, p)
    return dirichlet_form(grid, p) + grid.weight * float(
        np.sum(np.mean(corner_dot(m, g) ** 2, axis=0)))


def poincare_constant(dim: int) -> float:
    """Poincare constant ``1 / (pi sqrt(dim))`` of the unit cube."""
    return 1.0 / (np.pi * np.sqrt(dim))


def discrete_poincare_constant(grid: Grid) -> float:
    """Poincare constant of the discrete Dirichlet Laplacian."""
    lam = grid.dim * 4.0 / grid.h ** 2 * np.sin(np.pi * grid.h / 2) ** 2
    return 1.0 / np.sqrt(lam)


# -- mollified operator --------------------------------------------------
def apply_mollified(grid: Grid, m, p, kernel: KernelStencil) -> np.ndarray:
    """Mass-scaled product of the mollified pressure operator.

    Its quadratic form is ``sum_faces h^d |Dp|^2 + mean_c <(m.g_c) * eta, m.g_c>``.
    """
    g = corner_gradients(grid, p)
    smooth = convolve(kernel, corner_dot(m, g))
    return -laplacian(grid, p) + corner_adjoint(grid, smooth[:, None] * m[None])


def solve_pressure_mollified(grid: Grid, m, S, kernel: KernelStencil | float,
                             tol: float = 1e-12, x0=None) -> PressureSolve:
    """Solve the mollified pressure equation by matrix-free CG."""
    m = grid.check_vector(m, "m")
    S = grid.check_scalar(S, "S")
    if not isinstance(kernel, KernelStencil):
        kernel = heat_kernel(grid, float(kernel))
    mm = m ** 2 * kernel.center_weight
    diag = anisotropic_diagonal(grid, np.sqrt(mm))
    p, its, res = pcg(lambda x: apply_mollified(grid, m, x, kernel), S, diag,
                      x0=x0, tol=tol, maxiter=50 * grid.size)
    return _pressure(grid, p, its, res)


def mollified_form(grid: Grid, m, p, q, kernel: KernelStencil) -> float:
    """Bilinear form ``B(p, q)`` of the mollified operator."""
    return inner(grid, apply_mollified(grid, m, p, kernel), q)


# -- one-dimensional closed forms ----------------------------------------
@dataclass(frozen=True)
class CumulativeSource1D:
    """Running integral ``B(x_i) = int_0^{x_i} S`` at the interior nodes."""

    B: np.ndarray
    source: np.ndarray = field(repr=False)


def cumulative_source(grid: Grid, S) -> CumulativeSource1D:
    """Lumped running integral ``B(x_i) = h sum_{j <= i} S_j``."""
    if grid.dim != 1:
        raise ValueError("cumulative source requires a 1D grid")
    S = grid.check_scalar(S, "S")
    return CumulativeSource1D(grid.h * np.cumsum(S), S)


def _trapz_cumulative(y, h):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]))
    return out


def dirichlet_flux_constant(grid: Grid, m, F_full) -> float:
    """Integration constant ``B*`` making ``p(1) = 0`` when ``p(0) = 0``."""
    b = 1.0 + np.pad(np.asarray(m).reshape(grid.n), 1) ** 2
    w = _trapz_cumulative(1.0 / b, grid.h)[-1]
    return float(_trapz_cumulative(F_full / b, grid.h)[-1] / w)


def _full_cumulative(grid, S):
    F = np.zeros(grid.n + 2)
    F[1:-1] = cumulative_source(grid, S).B
    F[-1] = F[-2]
    return F


def solve_pressure_1d(grid: Grid, m, S, bc: str = "mixed") -> PressureSolve:
    """Closed-form 1D pressure.

    ``bc="mixed"``: ``p'(0) = 0`` and ``p(1) = 0``, flux ``p' = -B / (1 + m^2)``.
    ``bc="dirichlet"``: ``p(0) = p(1) = 0``, flux ``p' = (B* - B) / (1 + m^2)``.
    The pressure is recovered from the nodal flux by the trapezoidal rule,
    and ``gradp`` holds the flux itself.
    """
    if grid.dim != 1:
        raise ValueError("closed-form pressure requires a 1D grid")
    m = grid.check_any(m, "m").reshape(grid.n)
    S = grid.check_scalar(S, "S")
    b = 1.0 + np.pad(m, 1) ** 2
    F = _full_cumulative(grid, S)
    if bc == "mixed":
        flux = -F / b
        prim = _trapz_cumulative(flux, grid.h)
        p = prim - prim[-1]
    elif bc == "dirichlet":
        flux = (dirichlet_flux_constant(grid, m, F) - F) / b
        p = _trapz_cumulative(flux, grid.h)
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    return PressureSolve(grid, p[1:-1].copy(), flux[None, 1:-1].copy())


# -- stationary pressure of a D = 0 pattern ------------------------------
@dataclass
class StationaryPressure:
    """Minimizer of the convex pattern functional and its history."""

    pressure: PressureSolve
    functional: list[float]
    decrements: list[float]
    grad_norms: list[float]
    iterations: int


def _power(lam, q):
    return np.power(np.maximum(lam, 0.0), q)


class PatternFunctional:
    r"""Convex functional whose minimizer is the pressure of a D = 0 pattern.

    .. math::
        F[p] = \tfrac12 a_0(p, p)
             + \kappa \sum_{A} h^d \lambda(p)^{\gamma/(\gamma-1)} - (S, p),

    with ``kappa = c^{2/(gamma-1)} (gamma-1) / (2 gamma)``, ``A`` the nodes of
    nonzero sign and ``lambda`` the largest eigenvalue of the nodal gradient
    tensor, the discrete stand-in for ``|grad p|^2``.  Its Euler-Lagrange
    equation is exactly the pressure equation with the conductance built by
    :func:`nflab.spectra.construct_pattern_d0`.
    """

    def __init__(self, pattern: PatternSpec, params: ModelParams, S):
        if params.gamma <= 1:
            raise ValueError("the pattern functional requires gamma > 1")
        self.grid = pattern.grid
        self.active = pattern.active.astype(float)
        self.S = self.grid.check_scalar(S, "S")
        g = params.gamma
        self.c2 = params.c ** 2
        self.expo = g / (g - 1.0)
        self.kappa = params.c ** (2.0 / (g - 1.0)) * (g - 1.0) / (2.0 * g)
        self.gamma = g

    def value(self, p) -> float:
        lam, _ = top_eigenpair(gradient_tensor(corner_gradients(self.grid, p)))
        return (0.5 * dirichlet_form(self.grid, p)
                + self.kappa * self.grid.weight * float(np.sum(self.active * _power(lam, self.expo)))
                - inner(self.grid, self.S, p))

    def gradient(self, p) -> np.ndarray:
        """Lumped-mass gradient of ``F`` (nodal field)."""
        g = corner_gradients(self.grid, p)
        lam, v = top_eigenpair(gradient_tensor(g))
        r2 = self.active * _power(self.c2 * lam, 1.0 / (self.gamma - 1.0))
        w = (r2 * corner_dot(v, g))[:, None] * v[None]
        return -laplacian(self.grid, p) + corner_adjoint(self.grid, w) - self.S

    def increment(self, p, d, alpha) -> float:
        """``F[p + alpha d] - F[p]`` evaluated without cancellation."""
        grid = self.grid
        quad = sum(float(np.sum(face_diff(grid, p, a) * face_diff(grid, d, a)))
                   for a in range(grid.dim))
        quad2 = dirichlet_form(grid, d) / grid.weight
        dq = grid.weight * (alpha * quad + 0.5 * alpha ** 2 * quad2)
        dl = -alpha * inner(grid, self.S, d)
        g = corner_gradients(grid, p)
        dg = alpha * corner_gradients(grid, d)
        M = gradient_tensor(g)
        dM = (np.einsum("ca...,cb...->ab...", g, dg)
              + np.einsum("ca...,cb...->ab...", dg, g)
              + np.einsum("ca...,cb...->ab...", dg, dg)) / g.shape[0]
        lam, _ = top_eigenpair(M)
        dlam = _top_eigen_increment(M, dM)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(lam > 0, dlam / np.where(lam > 0, lam, 1.0), 0.0)
            rel = np.maximum(rel, -1.0)
            inc = np.where(lam > 0,
                           _power(lam, self.expo) * np.expm1(self.expo * np.log1p(rel)),
                           _power(dlam, self.expo))
        dn = self.kappa * grid.weight * float(np.sum(self.active * inc))
        return dq + dn + dl


def _top_eigen_increment(M, dM):
    """``lambda_max(M + dM) - lambda_max(M)`` computed stably."""
    if M.shape[0] == 1:
        return dM[0, 0]
    a, b, d = M[0, 0], M[0, 1], M[1, 1]
    da, db, dd = dM[0, 0], dM[0, 1], dM[1, 1]
    half, dhalf = 0.5 * (a - d), 0.5 * (da - dd)
    A = half ** 2 + b ** 2
    dA = 2 * half * dhalf + dhalf ** 2 + 2 * b * db + db ** 2
    root = np.sqrt(A)
    root_new = np.sqrt(np.maximum(A + dA, 0.0))
    denom = root + root_new
    with np.errstate(divide="ignore", invalid="ignore"):
        dsqrt = np.where(denom > 0, dA / np.where(denom > 0, denom, 1.0), 0.0)
    return 0.5 * (da + dd) + dsqrt


def solve_stationary_pressure_d0(pattern: PatternSpec, params: ModelParams, S,
                                 tol: float = 1e-10, max_iter: int = 10_000
                                 ) -> StationaryPressure:
    """Minimize :class:`PatternFunctional` by preconditioned gradient descent.

    Each search direction is ``-K^{-1} grad F`` with ``K`` the Dirichlet
    Laplacian (one CG solve); the step length starts at one and is halved
    until the Armijo condition with constant ``1e-4`` holds.

    Parameters
    ----------
    pattern : PatternSpec
        Signs defining the active set.
    params : ModelParams
        Only ``c`` and ``gamma`` (> 1) are used.
    S : ndarray
        Source.
    tol : float
        Stop once the L2 norm of the lumped gradient is at most ``tol``.
    max_iter : int
        Cap on outer iterations.

    Raises
    ------
    ValueError
        For ``gamma = 1``.
    NonConvergence
        When the cap is reached or the line search stalls.
    """
    functional = PatternFunctional(pattern, params, S)
    grid = pattern.grid
    poisson_diag = np.full(grid.shape, 2.0 * grid.dim / grid.h ** 2)

    def poisson(x):
        return -laplacian(grid, x)

    # starting guess only, so a moderate tolerance suffices
    p, _, _ = pcg(poisson, functional.S, poisson_diag, tol=1e-10)
    values = [functional.value(p)]
    decrements: list[float] = []
    norms: list[float] = []
    for it in range(max_iter + 1):
        grad = functional.gradient(p)
        gnorm = l2_norm(grid, grad)
        norms.append(gnorm)
        if gnorm <= tol:
            return StationaryPressure(_pressure(grid, p, it, gnorm), values,
                                      decrements, norms, it)
        if it == max_iter:
            break
        d, _, _ = pcg(poisson, -grad, poisson_diag, tol=1e-10)
        slope = inner(grid, grad, d)
        if slope >= 0:
            d, slope = -grad, -gnorm ** 2
        alpha = 1.0
        while True:
            delta = functional.increment(p, d, alpha)
            if delta <= 1e-4 * alpha * slope and delta < 0:
                break
            alpha *= 0.5
            if alpha < 1e-30:
                raise NonConvergence(
                    f"line search stalled with gradient norm {gnorm:.3e}", it, gnorm)
        p = p + alpha * d
        decrements.append(delta)
        values.append(values[-1] + delta)
    raise NonConvergence(f"no convergence in {max_iter} iterations "
                         f"(gradient norm {norms[-1]:.3e})", max_iter, norms[-1])
