"""Geometry of Z^2 and of the torus Z^2_m.

Site collections are passed around as integer arrays of shape (k, 2) in
lexicographic order; anything iterable of pairs is accepted as input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np

STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


class Site(NamedTuple):
    x: int
    y: int

    @property
    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def neighbors(self) -> list["Site"]:
        return [Site(self.x + dx, self.y + dy) for dx, dy in STEPS]


def as_sites(points) -> np.ndarray:
    """Coerce points to a sorted, duplicate-free (k, 2) int64 array."""
    arr = np.asarray(list(points) if not isinstance(points, np.ndarray) else points,
                     dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if len(arr) > 1:
        d = np.diff(arr, axis=0)
        if not np.all((d[:, 0] > 0) | ((d[:, 0] == 0) & (d[:, 1] > 0))):
            arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
            keep = np.ones(len(arr), dtype=bool)
            keep[1:] = np.any(arr[1:] != arr[:-1], axis=1)
            arr = arr[keep]
    return np.ascontiguousarray(arr)


def site_set(points) -> frozenset:
    return frozenset(map(tuple, as_sites(points).tolist()))


def _squared_bound(radius) -> int:
    """Largest integer d2 with d2 <= radius**2, computed exactly."""
    r = Fraction(radius)
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    return math.floor(r * r)


@dataclass(frozen=True)
class Disk:
    """The discrete disk B(center, radius) = {y : |y - center| <= radius}."""

    center: tuple[int, int]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (int(self.center[0]), int(self.center[1])))
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")

    @property
    def r2(self) -> int:
        return _squared_bound(self.radius)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        d = p - np.asarray(self.center)
        return (d * d).sum(axis=1) <= self.r2


def disk(radius, center=(0, 0)) -> Disk:
    return Disk(center, radius)


def ball_sites(d: Disk) -> np.ndarray:
    """All lattice points of ``d``, lexicographically sorted."""
    r2 = d.r2
    k = math.isqrt(r2)
    off = np.arange(-k, k + 1)
    X, Y = np.meshgrid(off, off, indexing="ij")
    keep = X * X + Y * Y <= r2
    pts = np.stack([X[keep], Y[keep]], axis=1) + np.asarray(d.center)
    return pts.astype(np.int64)


@dataclass(frozen=True)
class Box:
    """Axis-aligned integer window used to rasterise site sets."""

    x0: int
    y0: int
    nx: int
    ny: int

    @classmethod
    def around(cls, points, margin: int = 1) -> "Box":
        p = as_sites(points)
        if len(p) == 0:
            return cls(0, 0, 1, 1)
        lo = p.min(axis=0) - margin
        hi = p.max(axis=0) + margin
        return cls(int(lo[0]), int(lo[1]), int(hi[0] - lo[0] + 1), int(hi[1] - lo[1] + 1))

    def mask(self, points) -> np.ndarray:
        m = np.zeros((self.nx, self.ny), dtype=bool)
        p = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        if len(p):
            m[p[:, 0] - self.x0, p[:, 1] - self.y0] = True
        return m

    def sites(self, mask: np.ndarray) -> np.ndarray:
        I, J = np.nonzero(mask)
        return np.stack([I + self.x0, J + self.y0], axis=1).astype(np.int64)


def inner_boundary(A) -> np.ndarray:
    """Sites of A having at least one neighbour outside A."""
    pts = as_sites(A)
    if len(pts) == 0:
        return pts
    box = Box.around(pts, margin=1)
    m = box.mask(pts)
    interior = m.copy()
    interior[1:-1, 1:-1] &= m[2:, 1:-1] & m[:-2, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2]
    return box.sites(m & ~interior)


def outer_boundary(A) -> np.ndarray:
    """Sites outside A adjacent to A."""
    pts = as_sites(A)
    box = Box.around(pts, margin=2)
    m = box.mask(pts)
    grown = m.copy()
    grown[1:, :] |= m[:-1, :]
    grown[:-1, :] |= m[1:, :]
    grown[:, 1:] |= m[:, :-1]
    grown[:, :-1] |= m[:, 1:]
    return box.sites(grown & ~m)


@dataclass(frozen=True)
class Shell:
    n: int
    sites: np.ndarray


def shell(n: int) -> Shell:
    """Lambda_n = {x : n - 1 < |x| <= n}."""
    if n < 1:
        raise ValueError(f"shell index must be >= 1, got {n}")
    off = np.arange(-n, n + 1)
    X, Y = np.meshgrid(off, off, indexing="ij")
    d2 = X * X + Y * Y
    keep = ((n - 1) ** 2 < d2) & (d2 <= n * n)
    return Shell(n, np.stack([X[keep], Y[keep]], axis=1).astype(np.int64))


def shell_index(points) -> np.ndarray:
    """Index n of the shell containing each site (0 for the origin)."""
    p = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    d2 = (p * p).sum(axis=1)
    # smallest n with d2 <= n^2
    n = np.ceil(np.sqrt(d2.astype(np.float64))).astype(np.int64)
    n -= (n - 1) * (n - 1) >= d2
    n += n * n < d2
    return np.where(d2 == 0, 0, n)


@dataclass(frozen=True)
class TorusSpec:
    m: int

    def __post_init__(self):
        if self.m < 3:
            raise ValueError(f"torus side must be >= 3, got {self.m}")

    @property
    def center(self) -> tuple[int, int]:
        return (self.m // 2, self.m // 2)

    def reduce(self, points) -> np.ndarray:
        return np.mod(np.asarray(points, dtype=np.int64), self.m)


@dataclass(frozen=True)
class TorusEmbedding:
    """Translation of Z^2 into Z^2_m placing ``disk.center`` at the torus centre."""

    disk: Disk
    torus: TorusSpec

    @property
    def offset(self) -> np.ndarray:
        return np.asarray(self.torus.center) - np.asarray(self.disk.center)

    def __call__(self, points) -> np.ndarray:
        return self.torus.reduce(np.asarray(points, dtype=np.int64) + self.offset)


def torus_embed(d: Disk, torus: TorusSpec) -> TorusEmbedding:
    if 2 * d.radius >= torus.m:
        raise ValueError(
            f"disk of radius {d.radius} does not embed injectively in Z^2_{torus.m}")
    return TorusEmbedding(d, torus)


def is_nearest_neighbor_path(points) -> bool:
    p = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(p) < 2:
        return True
    return bool(np.all(np.abs(np.diff(p, axis=0)).sum(axis=1) == 1))


def iter_sites(points) -> Iterable[Site]:
    for x, y in np.asarray(points, dtype=np.int64).reshape(-1, 2):
        yield Site(int(x), int(y))
