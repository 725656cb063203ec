"""Midpoint quadrature grids and ball-coverage rasters."""
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np

from services.geometry import Window
from utils.errors import InvalidResolutionError

MAX_CELLS = 50_000_000
# side / h within this relative slack of an integer is treated as exact
SNAP = 1e-9


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint rule over a box; the last cell on each axis is clipped to the box."""

    window: Window
    spacing: float

    def __post_init__(self):
        h = self.spacing
        if not (h > 0 and math.isfinite(h)):
            raise InvalidResolutionError(f"Quadrature spacing must be positive, got {h}")
        cells = np.prod([float(n) for n in self.shape])
        if cells > MAX_CELLS:
            raise InvalidResolutionError(f"Quadrature grid of {cells:.0f} cells exceeds {MAX_CELLS}")

    @cached_property
    def shape(self) -> Tuple[int, ...]:
        return tuple(max(1, math.ceil(s / self.spacing - SNAP)) for s in self.window.sides)

    @cached_property
    def edges(self) -> List[np.ndarray]:
        out = []
        for lo, hi, n in zip(self.window.lower, self.window.upper, self.shape):
            e = lo + self.spacing * np.arange(n + 1)
            e[-1] = hi
            out.append(e)
        return out

    @cached_property
    def centers(self) -> List[np.ndarray]:
        return [(e[:-1] + e[1:]) / 2 for e in self.edges]

    @cached_property
    def weights(self) -> np.ndarray:
        """Cell volumes, shape ``self.shape``."""
        w = np.ones(())
        for e in self.edges:
            w = np.multiply.outer(w, np.diff(e))
        return w

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.centers, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def coverage_mask(coords: np.ndarray, r: float, grid: QuadratureGrid) -> np.ndarray:
    """True on cells whose center lies within distance <= r of some point."""
    dim = grid.window.dim
    mask = np.zeros(grid.shape, dtype=bool)
    for v in np.asarray(coords, dtype=float).reshape(-1, dim):
        block, sq = [], 0.0
        for axis, (c, x) in enumerate(zip(grid.centers, v)):
            lo = max(0, int(np.searchsorted(c, x - r, side="left")) - 1)
            hi = min(len(c), int(np.searchsorted(c, x + r, side="right")) + 1)
            if lo >= hi:
                break
            shape = [1] * dim
            shape[axis] = hi - lo
            sq = sq + ((c[lo:hi] - x) ** 2).reshape(shape)
            block.append(slice(lo, hi))
        else:
            mask[tuple(block)] |= np.sqrt(sq) <= r
    return mask


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def ball_offsets(r: float, h: float, dim: int) -> np.ndarray:
    """Centers of the h-grid cells (cell-centered at the origin's corners) inside B(0, r)."""
    k = math.ceil(r / h)
    axis = (np.arange(-k, k) + 0.5) * h
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts[np.linalg.norm(pts, axis=1) <= r]


def ball_stencil(r: float, h: float, dim: int) -> np.ndarray:
    """Integer-offset footprint {k : ||k|| h <= r}, used for grid correlations."""
    k = int(math.floor(r / h + SNAP))
    axis = np.arange(-k, k + 1)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    dist = np.sqrt(sum(m.astype(float) ** 2 for m in mesh)) * h
    return (dist <= r * (1 + SNAP)).astype(float)
