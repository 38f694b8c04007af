"""Uniform grids on the phase space and piecewise-constant densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class Grid:
    """``n`` equal cells tiling ``[lo, hi)``; on the circle cell n-1 touches cell 0."""

    n: int
    lo: float = 0.0
    hi: float = 1.0
    circle: bool = True

    def __post_init__(self):
        if self.n < 16:
            raise ValueError(f"grid needs at least 16 cells, got {self.n}")
        if not self.hi > self.lo:
            raise ValueError("grid needs hi > lo")
        if self.circle and (self.lo, self.hi) != (0.0, 1.0):
            raise ValueError("circle grids tile [0, 1)")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def edges(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.lo + self.h * (np.arange(self.n) + 0.5)

    def cell_of(self, x):
        """Cell index of each point (points are reduced mod 1 on the circle)."""
        x = np.asarray(x, dtype=float)
        if self.circle:
            x = np.mod(x, 1.0)
        idx = np.floor((x - self.lo) / self.h).astype(np.int64)
        return np.clip(idx, 0, self.n - 1)

    def overlap_fractions(self, arcs) -> np.ndarray:
        """Fraction of each cell covered by a union of disjoint ``(a, b)`` arcs.

        Arcs must already lie inside ``[lo, hi]`` (use ``MapModel.hole_arcs``).
        """
        frac = np.zeros(self.n)
        edges = self.edges
        for a, b in arcs:
            if b <= a:
                continue
            i0 = max(int(np.floor((a - self.lo) / self.h)), 0)
            i1 = min(int(np.ceil((b - self.lo) / self.h)), self.n)
            left = np.maximum(edges[i0:i1], a)
            right = np.minimum(edges[i0 + 1:i1 + 1], b)
            frac[i0:i1] += np.clip(right - left, 0.0, None) / self.h
        return np.clip(frac, 0.0, 1.0)


def variation(values, circle: bool = True) -> float:
    """Total variation of the step function with the given cell values."""
    v = np.asarray(values, dtype=float)
    total = float(np.abs(np.diff(v)).sum())
    if circle and v.size > 1:
        total += abs(float(v[0] - v[-1]))
    return total


def bv_norm(values, grid: Grid) -> float:
    """Var + L1 of a grid function."""
    v = np.asarray(values, dtype=float)
    return variation(v, grid.circle) + float(np.abs(v).sum()) * grid.h


def column_variation(matrix, circle: bool = True) -> np.ndarray:
    """Variation of every column of a 2-D array (dense or sparse)."""
    if hasattr(matrix, "toarray"):
        matrix = matrix.toarray()
    m = np.asarray(matrix, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    var = np.abs(np.diff(m, axis=0)).sum(axis=0)
    if circle:
        var += np.abs(m[0] - m[-1])
    return var


@dataclass(frozen=True)
class Density:
    """Density per unit length on each cell of ``grid``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatch(f"expected {self.grid.n} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, grid: Grid) -> "Density":
        return cls(np.full(grid.n, 1.0 / grid.length), grid)

    @property
    def mass(self) -> float:
        return float(self.values.sum()) * self.grid.h

    def normalized(self) -> "Density":
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize a density of zero mass")
        return Density(self.values / m, self.grid)

    def l1(self) -> float:
        return float(np.abs(self.values).sum()) * self.grid.h

    def bv(self) -> float:
        return bv_norm(self.values, self.grid)

    def mass_on(self, weights) -> float:
        """Mass carried by cells, each weighted by a fraction in [0, 1]."""
        return float(np.dot(self.values, weights)) * self.grid.h

    def check_compatible(self, other_grid: Grid):
        if other_grid != self.grid:
            raise GridMismatch(f"{self.grid} vs {other_grid}")
