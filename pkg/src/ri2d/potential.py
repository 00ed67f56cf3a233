"""Discrete potential theory on Z^2.

The potential kernel ``a`` is tabulated on a disk by a sparse solve and
continued outside it by its asymptotic expansion

    a(x) = (2/pi) ln|x| + kappa - cos(4 phi) / (6 pi |x|^2) + O(|x|^-4).

Harmonic measures "from infinity", hitting kernels and capacities of finite
sets are computed exactly from ``a`` (a dense bordered system on the inner
boundary); conditional measures between nested sets use a sparse Dirichlet
solve on the annulus.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import STEPS, Box, Disk, as_sites, ball_sites, inner_boundary

log = logging.getLogger(__name__)

CACHE_VERSION = 1
DEFAULT_RADIUS = 200
DEFAULT_TOL = 1e-12


class SolverError(RuntimeError):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def asymptotic_a(points, kappa: float) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = p[:, 0], p[:, 1]
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        c4 = (x**4 - 6 * x * x * y * y + y**4) / (r2 * r2)
        val = np.log(r2) / np.pi + kappa - c4 / (6 * np.pi * r2)
    return np.where(r2 == 0, 0.0, val)


@dataclass(frozen=True)
class PotentialTable:
    """Values of the potential kernel on B(R), plus the constant kappa.

    ``grid[x + R, y + R]`` holds a(x, y) for |(x, y)| <= R and NaN elsewhere.
    """

    R: int
    grid: np.ndarray = field(repr=False)
    kappa: float
    tol: float = DEFAULT_TOL

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        out = np.empty(len(p))
        r2 = (p * p).sum(axis=1)
        inside = r2 <= self.R * self.R
        q = p[inside] + self.R
        out[inside] = self.grid[q[:, 0], q[:, 1]]
        out[~inside] = asymptotic_a(p[~inside], self.kappa)
        return out

    def value(self, x: int, y: int) -> float:
        return float(self([(x, y)])[0])

    def harmonicity_residual(self, radius: float) -> float:
        """Max |mean of neighbours - a(x)| over 0 < |x| < radius."""
        if radius > self.R:
            raise ValueError("radius exceeds the tabulated disk")
        pts = ball_sites(Disk((0, 0), radius))
        pts = pts[((pts * pts).sum(axis=1) > 0) & ((pts * pts).sum(axis=1) < radius**2)]
        mean = sum(self(pts + s) for s in STEPS) / 4
        return float(np.abs(mean - self(pts)).max())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.grid.tobytes())
        h.update(np.float64(self.kappa).tobytes())
        return h.hexdigest()


def cache_dir() -> Path:
    return Path(os.environ.get("RI2D_CACHE_DIR", Path.home() / ".cache" / "ri2d"))


def _cache_path(R: int, tol: float) -> Path:
    return cache_dir() / f"potential_v{CACHE_VERSION}_R{R}_tol{tol:.0e}.npz"


def _solve_kernel(R: int, tol: float) -> PotentialTable:
    off = np.arange(-R - 1, R + 2)
    X, Y = np.meshgrid(off, off, indexing="ij")
    d2 = X * X + Y * Y
    inside = d2 <= R * R
    unknown = inside & (d2 > 0)
    idx = np.full(X.shape, -1, dtype=np.int64)
    N = int(unknown.sum())
    idx[unknown] = np.arange(N)
    I, J = np.nonzero(unknown)
    me = idx[I, J]

    rows, cols, vals = [me], [me], [np.full(N, 4.0)]
    b_log = np.zeros(N)
    b_one = np.zeros(N)
    for dx, dy in STEPS:
        In, Jn = I + dx, J + dy
        nb = idx[In, Jn]
        ok = nb >= 0
        rows.append(me[ok])
        cols.append(nb[ok])
        vals.append(-np.ones(ok.sum()))
        out = ~inside[In, Jn]
        far = np.stack([X[In[out], Jn[out]], Y[In[out], Jn[out]]], axis=1)
        # kappa enters linearly: a = u + kappa * v
        np.add.at(b_log, me[out], asymptotic_a(far, 0.0))
        np.add.at(b_one, me[out], 1.0)
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    lu = spla.splu(A)
    u = lu.solve(b_log)
    v = lu.solve(b_one)
    unit = idx[R + 2, R + 1]
    kappa = (1.0 - u[unit]) / v[unit]
    sol = u + kappa * v
    rhs = b_log + kappa * b_one
    residual = float(np.linalg.norm(A @ sol - rhs) / np.linalg.norm(rhs))
    if residual > tol:
        raise SolverError("potential kernel solve did not converge", residual)

    grid = np.full((2 * R + 1, 2 * R + 1), np.nan)
    sub = idx[1:-1, 1:-1]
    grid[sub >= 0] = sol[sub[sub >= 0]]
    grid[R, R] = 0.0
    return PotentialTable(R, grid, float(kappa), tol)


def potential_kernel(R: int = DEFAULT_RADIUS, tol: float = DEFAULT_TOL,
                     use_cache: bool = True) -> PotentialTable:
    """Tabulate a(x) on B(R), reading or writing the on-disk cache."""
    if R < 2:
        raise ValueError(f"table radius must be >= 2, got {R}")
    path = _cache_path(R, tol)
    if use_cache and path.exists():
        with np.load(path) as f:
            if int(f["version"]) == CACHE_VERSION:
                return PotentialTable(int(f["R"]), f["grid"], float(f["kappa"]), float(f["tol"]))
    table = _solve_kernel(R, tol)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, version=CACHE_VERSION, R=R, grid=table.grid, kappa=table.kappa, tol=tol)
        os.replace(tmp, path)
        log.info("cached potential kernel at %s", path)
    return table


_DEFAULT: PotentialTable | None = None


def default_table() -> PotentialTable:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = potential_kernel()
    return _DEFAULT


@dataclass(frozen=True)
class HarmonicMeasure:
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights differ in length")

    def as_dict(self) -> dict:
        return {tuple(s): float(w) for s, w in zip(self.support.tolist(), self.weights)}

    def on(self, points) -> np.ndarray:
        """Weights at ``points`` (0 off the support)."""
        d = self.as_dict()
        return np.array([d.get(tuple(p), 0.0) for p in np.asarray(points).tolist()])

    def tv(self, other: "HarmonicMeasure") -> float:
        keys = set(self.as_dict()) | set(other.as_dict())
        a, b = self.as_dict(), other.as_dict()
        return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        i = rng.choice(len(self.weights), size=size, p=self.weights)
        return self.support[i]


class HittingKernel:
    """Exact hitting law of a finite set A for SRW started anywhere.

    Solves, for every y in dA, sum_z a(w - z) c_z + C = [w == y] on dA with
    sum_z c_z = 0; then P_x[S hits A first at y] = sum_z a(x - z) c_z + C for
    x outside A, and C is hm_A(y).
    """

    def __init__(self, A, table: PotentialTable | None = None):
        self.table = table or default_table()
        self.A = as_sites(A)
        if len(self.A) == 0:
            raise ValueError("empty set has no harmonic measure")
        self.boundary = inner_boundary(self.A)
        b = self.boundary
        N = len(b)
        M = self.table((b[:, None, :] - b[None, :, :]).reshape(-1, 2)).reshape(N, N)
        bordered = np.zeros((N + 1, N + 1))
        bordered[:N, :N] = M
        bordered[:N, N] = 1.0
        bordered[N, :N] = 1.0
        self._G = scipy.linalg.inv(bordered)
        self._mask_box = Box.around(self.A, margin=0)
        self._mask = self._mask_box.mask(self.A)

    @cached_property
    def hm(self) -> HarmonicMeasure:
        w = self._G[len(self.boundary), :len(self.boundary)].copy()
        w = np.clip(w, 0.0, None)
        return HarmonicMeasure(self.boundary, w / w.sum())

    @cached_property
    def bordered_capacity(self) -> float:
        return float(-self._G[-1, -1])

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        q = p - np.array([self._mask_box.x0, self._mask_box.y0])
        ok = (q[:, 0] >= 0) & (q[:, 0] < self._mask_box.nx) & (q[:, 1] >= 0) & (q[:, 1] < self._mask_box.ny)
        out = np.zeros(len(p), dtype=bool)
        out[ok] = self._mask[q[ok, 0], q[ok, 1]]
        return out

    def hitting(self, x) -> np.ndarray:
        """Row vector P_x[S_{tau_A} = y], y over ``self.boundary``."""
        x = np.asarray(x, dtype=np.int64).reshape(2)
        if self.contains(x[None])[0]:
            out = np.zeros(len(self.boundary))
            hit = np.all(self.boundary == x, axis=1)
            out[hit] = 1.0
            return out
        N = len(self.boundary)
        ax = self.table(x - self.boundary)
        h = ax @ self._G[:N, :N] + self._G[N, :N]
        h = np.clip(h, 0.0, None)
        return h / h.sum()

    def conditioned_return(self, x) -> np.ndarray:
        """P^_x[conditioned walk ever hits A, first at y], y over ``self.boundary``.

        Doob transform of the SRW hitting law: H_A(x, y) a(y) / a(x).  Mass
        at the origin is zero since a(0) = 0.
        """
        x = np.asarray(x, dtype=np.int64).reshape(2)
        ax = self.table(x[None])[0]
        if ax <= 0:
            raise ValueError("conditioned walk is not defined at the origin")
        return self.hitting(x) * self.table(self.boundary) / ax


def _finite_set(A) -> np.ndarray:
    pts = as_sites(A)
    if len(pts) == 0:
        raise ValueError("set must be nonempty")
    return pts


def harmonic_measure(A, table: PotentialTable | None = None, method: str = "kernel",
                     R_far: int | None = None) -> HarmonicMeasure:
    """Harmonic measure of a finite set seen from infinity.

    ``method="kernel"`` is exact; ``method="container"`` approximates it by
    the conditional measure against B(c, R_far) around the set's centre,
    with O(1/R_far) bias.
    """
    A = _finite_set(A)
    if method == "kernel":
        return HittingKernel(A, table).hm
    if method != "container":
        raise ValueError(f"unknown method {method!r}")
    center = np.round(A.mean(axis=0)).astype(np.int64)
    spread = float(np.sqrt(((A - center) ** 2).sum(axis=1)).max())
    if R_far is None or R_far < 4 * max(spread, 1.0):
        raise ValueError(f"R_far={R_far} too small for a set of radius {spread:.2f}")
    return conditional_harmonic_measure(A, ball_sites(Disk(tuple(center), R_far)), table=table)


def conditional_harmonic_measure(A, A_outer, conditioned: bool = False,
                                 table: PotentialTable | None = None) -> HarmonicMeasure:
    """hm_A^{A'}(y) proportional to P_y[tau_1(dA') < tau_1(A)] for y in dA.

    With ``conditioned=True`` the walk is the Doob transform by ``a`` (it
    never visits the origin); the origin is then dropped from the support.
    """
    A = _finite_set(A)
    outer = _finite_set(A_outer)
    box = Box.around(outer, margin=1)
    in_outer = box.mask(outer)
    in_A = box.mask(A)
    if np.any(in_A & ~in_outer):
        raise ValueError("A must be a subset of A'")
    outer_bd = box.mask(inner_boundary(outer))
    if np.any(in_A & outer_bd):
        raise ValueError("A touches the boundary of A'")
    free = in_outer & ~in_A & ~outer_bd
    if not free.any() and not (outer_bd & ~in_A).any():
        raise ValueError("A' \\ A is empty")

    a_grid = None
    if conditioned:
        table = table or default_table()
        every = box.sites(np.ones((box.nx, box.ny), dtype=bool))
        a_grid = table(every).reshape(box.nx, box.ny)
        free &= a_grid > 0

    idx = np.full((box.nx, box.ny), -1, dtype=np.int64)
    N = int(free.sum())
    idx[free] = np.arange(N)
    I, J = np.nonzero(free)
    me = idx[I, J]

    def weights(I0, J0):
        if a_grid is None:
            return [np.full(len(I0), 0.25)] * 4
        w = [a_grid[I0 + dx, J0 + dy] for dx, dy in STEPS]
        tot = sum(w)
        return [wi / tot for wi in w]

    rows, cols, vals = [me], [me], [np.ones(N)]
    rhs = np.zeros(N)
    for (dx, dy), w in zip(STEPS, weights(I, J)):
        nb = idx[I + dx, J + dy]
        ok = nb >= 0
        rows.append(me[ok])
        cols.append(nb[ok])
        vals.append(-w[ok])
        hit = outer_bd[I + dx, J + dy] & ~in_A[I + dx, J + dy]
        np.add.at(rhs, me[hit], w[hit])
    f = np.zeros((box.nx, box.ny))
    f[outer_bd & ~in_A] = 1.0
    if N:
        M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
        sol = spla.splu(M).solve(rhs)
        res = float(np.linalg.norm(M @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
        if res > DEFAULT_TOL:
            raise SolverError("conditional harmonic measure solve", res)
        f[free] = sol

    bd = inner_boundary(A)
    if conditioned:
        bd = bd[np.any(bd != 0, axis=1)]
    Ib, Jb = bd[:, 0] - box.x0, bd[:, 1] - box.y0
    esc = sum(w * f[Ib + dx, Jb + dy] for (dx, dy), w in zip(STEPS, weights(Ib, Jb)))
    total = esc.sum()
    if total <= 0:
        raise ValueError("no escape route from A to the boundary of A'")
    return HarmonicMeasure(bd, esc / total)


def capacity(A, table: PotentialTable | None = None) -> float:
    """cap(A) = sum_y hm_A(y) a(y) for a finite A containing the origin."""
    A = _finite_set(A)
    if not np.any(np.all(A == 0, axis=1)):
        raise ValueError("capacity is rooted at the origin: A must contain 0")
    kern = HittingKernel(A, table)
    hm = kern.hm
    return float(np.dot(hm.weights, kern.table(hm.support)))


def conditioned_harmonic_measure(K, table: PotentialTable | None = None) -> HarmonicMeasure:
    """Entrance law of conditioned-walk trajectories into K, seen from infinity.

    Equals hm_A(x) a(x) / cap(A) on A = K U {0}; the origin carries no mass.
    """
    A = np.vstack([_finite_set(K), [[0, 0]]])
    kern = HittingKernel(A, table)
    hm = kern.hm
    w = hm.weights * kern.table(hm.support)
    keep = w > 0
    if not keep.any():
        raise ValueError("K U {0} has zero capacity")
    return HarmonicMeasure(hm.support[keep], w[keep] / w[keep].sum())
