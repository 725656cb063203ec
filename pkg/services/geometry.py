"""Point patterns, rectangular windows and the grid spatial index."""
import csv
import io
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from utils.errors import DomainTooSmallError, InvalidInputError

SUPPORTED_DIMS = (2, 3)
AXES = ("x", "y", "z")


def as_point(u: Sequence[float]) -> np.ndarray:
    p = np.asarray(u, dtype=float).reshape(-1)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"Point has non-finite coordinates: {p.tolist()}")
    return p


@dataclass(frozen=True)
class Window:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or len(lo) not in SUPPORTED_DIMS:
            raise InvalidInputError(f"Window bounds must share dimension 2 or 3, got {lo} / {hi}")
        if not all(math.isfinite(v) for v in lo + hi):
            raise InvalidInputError("Window bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidInputError(f"Window requires lower < upper on every axis, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def square(cls, side: float, dim: int = 2) -> "Window":
        return cls((0.0,) * dim, (float(side),) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of ``coords`` lying in the closed box."""
        coords = np.asarray(coords, dtype=float).reshape(-1, self.dim)
        return np.all((coords >= self.lower) & (coords <= self.upper), axis=1)

    def erode(self, r: float) -> "Window":
        return erode(self, r)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class PointPattern:
    coords: np.ndarray
    dim: int = 2

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float)
        if arr.size == 0 and not (arr.ndim == 2 and arr.shape[1] in SUPPORTED_DIMS):
            arr = arr.reshape(0, self.dim)
        if arr.ndim != 2:
            raise InvalidInputError(f"Point coordinates must form an (n, d) array, got shape {arr.shape}")
        if arr.shape[1] not in SUPPORTED_DIMS:
            raise InvalidInputError(f"Unsupported dimension {arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("Point pattern has non-finite coordinates")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)
        object.__setattr__(self, "dim", arr.shape[1])

    @classmethod
    def empty(cls, dim: int = 2) -> "PointPattern":
        return cls(np.empty((0, dim)), dim)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __iter__(self):
        return iter(self.coords)

    def restrict(self, window: Window) -> "PointPattern":
        return PointPattern(self.coords[window.contains(self.coords)], self.dim)

    def add(self, u: Sequence[float]) -> "PointPattern":
        return PointPattern(np.vstack([self.coords, as_point(u)]), self.dim)

    def remove(self, i: int) -> "PointPattern":
        return PointPattern(np.delete(self.coords, i, axis=0), self.dim)

    def translate(self, shift: Sequence[float]) -> "PointPattern":
        return PointPattern(self.coords + as_point(shift), self.dim)

    def scale(self, factor: float) -> "PointPattern":
        return PointPattern(self.coords * factor, self.dim)

    def within(self, u: Sequence[float], r: float) -> "PointPattern":
        """Points at distance <= r from u (closed ball)."""
        u = as_point(u)
        if len(self) == 0:
            return self
        d = np.linalg.norm(self.coords - u, axis=1)
        return PointPattern(self.coords[d <= r], self.dim)

    def min_pairwise_distance(self) -> float:
        if len(self) < 2:
            return math.inf
        return float(pdist(self.coords).min())

    # CSV: header x,y[,z], one point per row, '.' decimal separator
    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(AXES[: self.dim])
        for row in self.coords:
            writer.writerow([repr(float(v)) for v in row])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PointPattern":
        reader = csv.DictReader(io.StringIO(text.lstrip("﻿")))
        headers = [str(h).strip().lower() for h in (reader.fieldnames or [])]
        if headers not in (["x", "y"], ["x", "y", "z"]):
            raise InvalidInputError(f"Pattern CSV header must be x,y[,z], got {reader.fieldnames}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            try:
                rows.append([float(str(v).strip()) for v in row.values()])
            except (TypeError, ValueError):
                raise InvalidInputError(f"Bad coordinate on CSV line {line_no}: {row}") from None
        return cls(np.array(rows, dtype=float).reshape(-1, len(headers)), len(headers))


@dataclass(frozen=True)
class SpatialIndex:
    """Uniform grid hash: integer cell coordinates -> ids of the points inside."""

    pattern: PointPattern
    cell_size: float
    buckets: Dict[Tuple[int, ...], List[int]] = field(repr=False)
    cell_lo: Tuple[int, ...] = ()
    cell_hi: Tuple[int, ...] = ()

    def cell_of(self, u: np.ndarray) -> Tuple[int, ...]:
        return tuple(int(c) for c in np.floor(np.asarray(u) / self.cell_size))

    def _cells_around(self, u: np.ndarray, reach: int) -> Iterable[Tuple[int, ...]]:
        base = self.cell_of(u)
        for offset in itertools.product(range(-reach, reach + 1), repeat=self.pattern.dim):
            yield tuple(b + o for b, o in zip(base, offset))

    def candidates(self, u: Sequence[float], r: float) -> List[int]:
        u = as_point(u)
        reach = max(1, math.ceil(r / self.cell_size))
        ids: List[int] = []
        for cell in self._cells_around(u, reach):
            ids.extend(self.buckets.get(cell, ()))
        return ids

    def query_ball(self, u: Sequence[float], r: float) -> List[int]:
        """Sorted ids of points v with ||v - u|| <= r."""
        u = as_point(u)
        ids = self.candidates(u, r)
        if not ids:
            return []
        ids = np.array(sorted(ids))
        d = np.linalg.norm(self.pattern.coords[ids] - u, axis=1)
        return ids[d <= r].tolist()

    def distances_within(self, u: Sequence[float], r: float) -> np.ndarray:
        u = as_point(u)
        ids = self.candidates(u, r)
        if not ids:
            return np.empty(0)
        d = np.linalg.norm(self.pattern.coords[ids] - u, axis=1)
        return d[d <= r]


def build_index(pattern: PointPattern, cell_size: float) -> SpatialIndex:
    if not (cell_size > 0 and math.isfinite(cell_size)):
        raise InvalidInputError(f"cell_size must be positive, got {cell_size}")
    if not np.all(np.isfinite(pattern.coords)):
        raise InvalidInputError("Cannot index non-finite coordinates")
    buckets: Dict[Tuple[int, ...], List[int]] = defaultdict(list)
    cells = np.floor(pattern.coords / cell_size).astype(np.int64)
    for i, cell in enumerate(map(tuple, cells.tolist())):
        buckets[cell].append(i)
    if len(pattern) == 0:
        return SpatialIndex(pattern, float(cell_size), {})
    return SpatialIndex(
        pattern,
        float(cell_size),
        dict(buckets),
        tuple(cells.min(axis=0).tolist()),
        tuple(cells.max(axis=0).tolist()),
    )


def min_dist(u: Sequence[float], pattern: PointPattern, index: SpatialIndex = None) -> float:
    """Distance from u to the nearest point of ``pattern``; +inf when empty."""
    u = as_point(u)
    if len(pattern) == 0:
        return math.inf
    if index is None:
        return float(np.min(np.linalg.norm(pattern.coords - u, axis=1)))

    base = index.cell_of(u)
    max_ring = max(max(b - lo, hi - b) for b, lo, hi in zip(base, index.cell_lo, index.cell_hi))
    best = math.inf
    for ring in range(max_ring + 1):
        # unvisited rings (>= ring) lie at least (ring - 1) * cell_size away
        if best <= (ring - 1) * index.cell_size:
            break
        ids = []
        for offset in itertools.product(range(-ring, ring + 1), repeat=pattern.dim):
            if max(abs(o) for o in offset) != ring:
                continue
            ids.extend(index.buckets.get(tuple(b + o for b, o in zip(base, offset)), ()))
        if ids:
            best = min(best, float(np.min(np.linalg.norm(pattern.coords[ids] - u, axis=1))))
    return best


def erode(window: Window, r: float) -> Window:
    if not (r >= 0 and math.isfinite(r)):
        raise InvalidInputError(f"Erosion radius must be a finite r >= 0, got {r}")
    lower = tuple(a + r for a in window.lower)
    upper = tuple(b - r for b in window.upper)
    if any(a >= b for a, b in zip(lower, upper)):
        raise DomainTooSmallError(f"Eroding {window.to_dict()} by {r} leaves an empty window")
    return Window(lower, upper)


def count_in_annulus(
    u: Sequence[float],
    pattern: PointPattern,
    a: float,
    b: float,
    left_open: bool = False,
    index: SpatialIndex = None,
) -> int:
    """Number of v with ||v - u|| in [a, b], or in ]a, b] when ``left_open``."""
    if a < 0 or a > b:
        raise InvalidInputError(f"Annulus bounds require 0 <= a <= b, got a={a}, b={b}")
    u = as_point(u)
    if len(pattern) == 0:
        return 0
    if index is not None:
        d = index.distances_within(u, b)
    else:
        d = np.linalg.norm(pattern.coords - u, axis=1)
        d = d[d <= b]
    lower_ok = d > a if left_open else d >= a
    return int(np.count_nonzero(lower_ok))
