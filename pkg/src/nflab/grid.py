"""Uniform node grids on the unit interval or unit square.

Unknowns live on the interior nodes ``x_i = i h`` with ``h = 1/(n+1)``.
Boundary nodes carry the homogeneous Dirichlet value and are never stored.
Scalar fields are arrays of shape ``grid.shape``; vector fields carry a
leading component axis of length ``grid.dim``.  Every operator acts on the
trailing ``dim`` axes, so vector fields are handled component-wise.

Besides the usual central and face differences the grid provides *corner
gradients*: at every node and for every adjacent cell, the gradient of the
bilinear interpolant evaluated at that node.  They are the one-sided
differences ``(s_1 D_1^{s_1}, ..., s_d D_d^{s_d})`` for sign patterns
``s`` in ``{-1, +1}^d`` and underpin the pressure operator, the pumping
term and the energy, which keeps these three mutually consistent.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridMismatch, SnapshotError

SNAPSHOT_MAGIC = b"NFSIM1"


@dataclass(frozen=True)
class Grid:
    """Interior node lattice of ``(0, 1)^dim`` with ``n`` nodes per axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def weight(self) -> float:
        """Mass-lumped quadrature weight ``h^dim``."""
        return self.h ** self.dim

    @cached_property
    def axis_coords(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of shape ``self.shape`` per axis."""
        return tuple(np.meshgrid(*([self.axis_coords] * self.dim), indexing="ij"))

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(*coords)`` on the nodes."""
        return np.asarray(func(*self.coords()), dtype=float) * np.ones(self.shape)

    def zeros(self, vector: bool = False) -> np.ndarray:
        return np.zeros(((self.dim,) if vector else ()) + self.shape)

    @cached_property
    def corner_signs(self) -> tuple[tuple[int, ...], ...]:
        return tuple(itertools.product((-1, 1), repeat=self.dim))

    # -- shape checks -------------------------------------------------
    def check_scalar(self, u, name="field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise GridMismatch(f"{name} has shape {u.shape}, expected {self.shape}")
        return u

    def check_vector(self, m, name="field") -> np.ndarray:
        m = np.asarray(m, dtype=float)
        if m.shape != (self.dim,) + self.shape:
            raise GridMismatch(
                f"{name} has shape {m.shape}, expected {(self.dim,) + self.shape}")
        return m

    def check_any(self, u, name="field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[u.ndim - self.dim:] != self.shape:
            raise GridMismatch(f"{name} has shape {u.shape}, grid shape is {self.shape}")
        return u


# -- elementary shifts and differences ------------------------------------
def _ax(u, grid, axis):
    return u.ndim - grid.dim + axis


def _shift(u, grid, axis, k):
    """Return ``v`` with ``v_i = u_{i+k}`` (``k = +-1``), zero outside."""
    a = _ax(u, grid, axis)
    out = np.zeros_like(u)
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if k == 1:
        src[a], dst[a] = slice(1, None), slice(None, -1)
    else:
        src[a], dst[a] = slice(None, -1), slice(1, None)
    out[tuple(dst)] = u[tuple(src)]
    return out


def forward_diff(grid: Grid, u, axis):
    return (_shift(u, grid, axis, 1) - u) / grid.h


def backward_diff(grid: Grid, u, axis):
    return (u - _shift(u, grid, axis, -1)) / grid.h


def forward_diff_T(grid: Grid, v, axis):
    """Euclidean adjoint of :func:`forward_diff`."""
    return (_shift(v, grid, axis, -1) - v) / grid.h


def backward_diff_T(grid: Grid, v, axis):
    """Euclidean adjoint of :func:`backward_diff`."""
    return (v - _shift(v, grid, axis, 1)) / grid.h


def face_diff(grid: Grid, u, axis):
    """Differences across all ``n+1`` faces normal to ``axis``.

    The zero boundary values are included, so the result is one longer
    than ``u`` along ``axis``.
    """
    a = _ax(u, grid, axis)
    pad = [(0, 0)] * u.ndim
    pad[a] = (1, 1)
    return np.diff(np.pad(u, pad), axis=a) / grid.h


# -- operators --------------------------------------------------------
def gradient(grid: Grid, u):
    """Central-difference gradient with zero ghost values.

    Returns an array with a new leading axis of length ``dim``.
    """
    u = grid.check_any(u)
    return np.stack([
        (_shift(u, grid, a, 1) - _shift(u, grid, a, -1)) / (2.0 * grid.h)
        for a in range(grid.dim)])


def laplacian(grid: Grid, u):
    """Standard ``(2 dim + 1)``-point Laplacian with homogeneous Dirichlet closure."""
    u = grid.check_any(u)
    out = -2.0 * grid.dim * u
    for a in range(grid.dim):
        out = out + _shift(u, grid, a, 1) + _shift(u, grid, a, -1)
    return out / grid.h ** 2


def dirichlet_form(grid: Grid, u) -> float:
    """Quadrature of ``|grad u|^2`` from one-sided face differences."""
    u = grid.check_any(u)
    return grid.weight * sum(float(np.sum(face_diff(grid, u, a) ** 2))
                             for a in range(grid.dim))


def integrate(grid: Grid, f) -> float:
    """Mass-lumped quadrature ``h^dim * sum(f)``."""
    f = grid.check_any(f)
    return grid.weight * float(np.sum(f))


def inner(grid: Grid, f, g) -> float:
    f = grid.check_any(f)
    g = grid.check_any(g)
    if f.shape != g.shape:
        raise GridMismatch(f"shapes {f.shape} and {g.shape} differ")
    return grid.weight * float(np.sum(f * g))


def l2_norm(grid: Grid, f) -> float:
    return float(np.sqrt(inner(grid, f, f)))


def linf_norm(grid: Grid, f) -> float:
    """Maximum nodal magnitude (Euclidean over components for vector fields)."""
    f = grid.check_any(f)
    if f.ndim > grid.dim:
        f = np.sqrt(np.sum(f.reshape((-1,) + grid.shape) ** 2, axis=0))
    return float(np.max(np.abs(f))) if f.size else 0.0


def total_variation_1d(grid: Grid, m) -> float:
    """Discrete total variation including the jumps to the zero boundary values."""
    if grid.dim != 1:
        raise ValueError("total variation is only defined here for 1D grids")
    m = grid.check_any(m)
    m = m.reshape(-1, grid.n)
    if m.shape[0] != 1:
        raise ValueError("total variation expects a single-component field")
    return float(np.sum(np.abs(np.diff(np.pad(m[0], 1)))))


def node_norm(m) -> np.ndarray:
    """Pointwise Euclidean length of a vector field."""
    return np.sqrt(np.sum(np.asarray(m) ** 2, axis=0))


# -- corner gradients --------------------------------------------------
def corner_gradients(grid: Grid, u) -> np.ndarray:
    """All corner gradients of ``u``, shape ``(2^dim, dim) + grid.shape``."""
    u = grid.check_scalar(u)
    diffs = {(a, s): (forward_diff if s > 0 else backward_diff)(grid, u, a)
             for a in range(grid.dim) for s in (-1, 1)}
    return np.stack([np.stack([diffs[a, s[a]] for a in range(grid.dim)])
                     for s in grid.corner_signs])


def corner_adjoint(grid: Grid, w) -> np.ndarray:
    """Adjoint of :func:`corner_gradients` averaged over corners.

    For ``w`` of shape ``(2^dim, dim) + shape`` this returns the scalar field
    ``mean_c sum_a G_{c,a}^T w[c, a]``, so that
    ``inner(corner_adjoint(w), u) == mean_c inner(w[c], corner_gradients(u)[c])``.
    """
    out = np.zeros(grid.shape)
    for c, s in enumerate(grid.corner_signs):
        for a in range(grid.dim):
            op = forward_diff_T if s[a] > 0 else backward_diff_T
            out += op(grid, w[c, a], a)
    return out / len(grid.corner_signs)


def gradient_tensor(corners: np.ndarray) -> np.ndarray:
    """Nodal tensor ``mean_c g_c g_c^T``; shape ``(dim, dim) + grid.shape``."""
    return np.einsum("ca...,cb...->ab...", corners, corners) / corners.shape[0]


def corner_dot(m, corners) -> np.ndarray:
    """``m . g_c`` for every corner; shape ``(2^dim,) + grid.shape``."""
    return np.einsum("a...,ca...->c...", m, corners)


def top_eigenpair(tensor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Largest eigenvalue and unit eigenvector of a nodal symmetric tensor field.

    Closed form for 1x1 and 2x2 blocks.  The eigenvector sign is not fixed.
    """
    dim = tensor.shape[0]
    if dim == 1:
        lam = tensor[0, 0].copy()
        return lam, np.ones((1,) + lam.shape)
    a, b, d = tensor[0, 0], tensor[0, 1], tensor[1, 1]
    half = 0.5 * (a - d)
    rad = np.hypot(half, b)
    lam = 0.5 * (a + d) + rad
    # eigenvector (b, lam - a) or (lam - d, b), whichever is better conditioned
    v1 = np.stack([b, lam - a])
    v2 = np.stack([lam - d, b])
    use2 = np.sum(v2 ** 2, axis=0) > np.sum(v1 ** 2, axis=0)
    v = np.where(use2, v2, v1)
    nrm = np.sqrt(np.sum(v ** 2, axis=0))
    flat = nrm == 0.0
    v = np.where(flat, np.array([1.0, 0.0]).reshape(2, *([1] * lam.ndim)), v)
    nrm = np.where(flat, 1.0, nrm)
    return lam, v / nrm


# -- snapshots ------------------------------------------------------------
def write_snapshot(path, grid: Grid, field) -> Path:
    """Write ``field`` (scalar or vector) in the little-endian NFSIM1 layout."""
    field = grid.check_any(field)
    comps = field.reshape((-1,) + grid.shape)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<BId", grid.dim, grid.n, grid.h))
        for comp in comps:
            fh.write(np.ascontiguousarray(comp, dtype="<f8").tobytes())
    return Path(path)


def read_snapshot(path) -> tuple[Grid, np.ndarray]:
    """Read a snapshot; returns the grid and an array of shape ``(k,) + grid.shape``."""
    data = Path(path).read_bytes()
    head = len(SNAPSHOT_MAGIC) + struct.calcsize("<BId")
    if len(data) < head or not data.startswith(SNAPSHOT_MAGIC):
        raise SnapshotError(f"{path}: not an NFSIM1 snapshot")
    dim, n, h = struct.unpack("<BId", data[len(SNAPSHOT_MAGIC):head])
    try:
        grid = Grid(dim, n)
    except ValueError as exc:
        raise SnapshotError(f"{path}: {exc}") from None
    if abs(h - grid.h) > 1e-15:
        raise SnapshotError(f"{path}: spacing {h} inconsistent with n={n}")
    body = len(data) - head
    block = 8 * grid.size
    if body == 0 or body % block:
        raise SnapshotError(f"{path}: payload of {body} bytes is not a whole number of fields")
    values = np.frombuffer(data[head:], dtype="<f8").astype(float)
    return grid, values.reshape((body // block,) + grid.shape)
