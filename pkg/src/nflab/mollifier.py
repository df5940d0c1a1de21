"""Sampled heat-kernel mollifier with zero extension outside the domain."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .grid import Grid, inner

# samples below this fraction of the peak are dropped
TRUNCATION = 1e-16


@dataclass(frozen=True)
class KernelStencil:
    """Separable truncated stencil of the heat kernel ``eta_eps``.

    ``axis_weights[k + radius]`` is ``h (4 pi eps)^{-1/2} exp(-(k h)^2 / (4 eps))``;
    the full stencil weight at offset ``(k_1, .., k_d)`` is the product of
    the per-axis weights, i.e. ``eta_eps(k h) h^d``.
    """

    eps: float
    grid: Grid
    radius: int
    axis_weights: np.ndarray
    degenerate: bool = False
    normalized: bool = False

    @property
    def offsets(self) -> list[tuple[int, ...]]:
        r = range(-self.radius, self.radius + 1)
        return list(itertools.product(r, repeat=self.grid.dim))

    @property
    def weights(self) -> np.ndarray:
        w = self.axis_weights
        out = w
        for _ in range(self.grid.dim - 1):
            out = np.multiply.outer(out, w)
        return out.ravel()

    @property
    def center_weight(self) -> float:
        return float(self.axis_weights[self.radius] ** self.grid.dim)

    @property
    def mass(self) -> float:
        return float(np.sum(self.axis_weights) ** self.grid.dim)


def heat_kernel(grid: Grid, eps: float) -> KernelStencil:
    """Build the sampled heat-kernel stencil for time ``eps`` on ``grid``.

    The radius is the smallest one for which every omitted sample falls
    below ``1e-16`` times the peak.  A radius of zero yields the identity
    stencil with ``degenerate=True``.  If sampling on a coarse lattice puts
    the mass above one, the weights are scaled back to unit mass so the
    convolution stays an averaging operator.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    h = grid.h
    reach = math.sqrt(4.0 * eps * math.log(1.0 / TRUNCATION))
    radius = max(0, math.ceil(reach / h) - 1)
    while radius > 0 and math.exp(-((radius + 1) * h) ** 2 / (4 * eps)) >= TRUNCATION:
        radius += 1
    if radius == 0:
        return KernelStencil(eps, grid, 0, np.ones(1), degenerate=True)
    k = np.arange(-radius, radius + 1) * h
    w = h / math.sqrt(4 * math.pi * eps) * np.exp(-k ** 2 / (4 * eps))
    total = float(np.sum(w))
    normalized = total > 1.0
    if normalized:
        w = w / total
    return KernelStencil(eps, grid, radius, w, normalized=normalized)


def convolve(kernel: KernelStencil, u) -> np.ndarray:
    """Direct convolution of ``u`` (extended by zero) with ``kernel``, restricted to the nodes.

    Acts on the trailing ``dim`` axes, so vector fields are smoothed per component.
    """
    grid = kernel.grid
    u = grid.check_any(u)
    if kernel.degenerate:
        return u.copy()
    out = u
    for a in range(grid.dim):
        out = correlate1d(out, kernel.axis_weights, axis=u.ndim - grid.dim + a,
                          mode="constant", cval=0.0)
    return out


def positivity_check(kernel: KernelStencil, u) -> float:
    """Quadrature of ``(u * eta) u``; nonnegative for a positive kernel."""
    return inner(kernel.grid, convolve(kernel, u), u)
