"""Sign patterns selecting where a stationary conductance is switched on."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid


@dataclass(frozen=True)
class PatternSpec:
    """Nodal signs in ``{-1, 0, +1}``.

    Nodes with sign ``+1`` / ``-1`` carry a conductance parallel / antiparallel
    to the pressure gradient; sign ``0`` marks nodes where it vanishes.
    """

    grid: Grid
    signs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.signs)
        if s.shape != self.grid.shape:
            raise ValueError(f"signs have shape {s.shape}, expected {self.grid.shape}")
        if not np.all(np.isin(s, (-1, 0, 1))):
            raise ValueError("signs must take values in {-1, 0, 1}")
        object.__setattr__(self, "signs", s.astype(np.int8))

    @property
    def active(self) -> np.ndarray:
        return self.signs != 0

    @property
    def measure_a0(self) -> float:
        """Fraction of nodes with zero sign."""
        return float(np.mean(self.signs == 0))

    @classmethod
    def uniform(cls, grid: Grid, sign: int = 1) -> "PatternSpec":
        return cls(grid, np.full(grid.shape, sign))

    @classmethod
    def halves(cls, grid: Grid) -> "PatternSpec":
        """``+1`` for ``x_1 < 1/2`` and ``-1`` otherwise."""
        x = grid.coords()[0]
        return cls(grid, np.where(x < 0.5, 1, -1))

    @classmethod
    def stripes(cls, grid: Grid, k: int) -> "PatternSpec":
        """``k`` alternating stripes across the first axis."""
        x = grid.coords()[0]
        idx = np.minimum((x * k).astype(int), k - 1)
        return cls(grid, np.where(idx % 2 == 0, 1, -1))

    @classmethod
    def window(cls, grid: Grid, lo: float, hi: float) -> "PatternSpec":
        """``+1`` on ``lo <= x_1 <= hi``, zero elsewhere (a pattern with a dead zone)."""
        x = grid.coords()[0]
        return cls(grid, np.where((x >= lo) & (x <= hi), 1, 0))
