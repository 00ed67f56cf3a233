"""Excursions between concentric disks: count thresholds, i.i.d. excursion
sampling, coverage, torus runs and disk packings."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .lattice import (STEPS, Box, Disk, TorusSpec, as_sites, ball_sites, inner_boundary,
                      torus_embed)
from .potential import HarmonicMeasure, cache_dir, conditional_harmonic_measure
from .walks import (DEFAULT_MAX_STEPS, Excursion, PathSegment, TruncationError, _kernel_seed,
                    as_generator, extract_excursions)

log = logging.getLogger(__name__)

__all__ = [
    "Excursion", "CoverageState", "PackingLayout", "TorusRun", "TorusReturnKernel",
    "psi", "t_threshold", "sample_iid_excursions", "coverage_report",
    "torus_excursion_experiment", "disk_packing", "torus_return_kernel", "torus_side",
    "extract_excursions",
]


def psi(n: float, beta: float, gamma: float) -> float:
    """Excursion budget 2 ln^2 n / ln g - (1 + beta) ln n ln ln n / ln g."""
    if not n > math.e:
        raise ValueError(f"need n > e, got {n}")
    if not gamma > 1:
        raise ValueError(f"need gamma > 1, got {gamma}")
    ln = math.log(n)
    return (2 * ln * ln - (1 + beta) * ln * math.log(ln)) / math.log(gamma)


def t_threshold(m: float, beta: float) -> float:
    """Torus time (4/pi) m^2 ln^2 m - (1 + beta) (2/pi) m^2 ln m ln ln m."""
    if not m > math.e:
        raise ValueError(f"need m > e, got {m}")
    ln = math.log(m)
    return (4 / math.pi) * m * m * ln * ln - (1 + beta) * (2 / math.pi) * m * m * ln * math.log(ln)


def torus_side(n: int, gamma: float) -> int:
    return int(math.floor(3 * gamma * n))


@dataclass
class CoverageState:
    target: np.ndarray
    visited: np.ndarray

    @property
    def complete(self) -> bool:
        return len(self.visited) == len(self.target)

    @property
    def uncovered_count(self) -> int:
        return len(self.target) - len(self.visited)


def _annulus(n, gamma):
    inner = Disk((0, 0), n)
    outer = Disk((0, 0), gamma * n)
    return inner, outer


def sample_iid_excursions(n: int, gamma: float, count: int, entry: HarmonicMeasure, rng,
                          max_steps: int = DEFAULT_MAX_STEPS) -> list[Excursion]:
    """``count`` independent SRW excursions from dB(n) to dB(gamma n)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = as_generator(rng)
    inner, outer = _annulus(n, gamma)
    if not np.all(inner.contains(entry.support)) or len(inner_boundary(ball_sites(inner))) == 0:
        raise ValueError("entry measure must live on dB(n)")
    stop = inner_boundary(ball_sites(outer))
    box = Box.around(stop, margin=0)
    mask = box.mask(stop)
    starts = entry.sample(rng, size=count) if count else np.empty((0, 2), np.int64)
    out = []
    for x, y in starts:
        sites, status, _, _, _ = K.srw_until(int(x), int(y), _kernel_seed(rng), mask,
                                             box.x0, box.y0, max_steps, True)
        seg = PathSegment(sites)
        if status == K.TRUNCATED:
            raise TruncationError(seg, max_steps)
        out.append(Excursion(seg, (int(x), int(y)), tuple(sites[-1].tolist()), (inner, outer)))
    return out


def coverage_report(d: Disk, excursions) -> CoverageState:
    """Which sites of the disk the excursions visited."""
    target = ball_sites(d)
    box = Box.around(target, margin=0)
    hit = np.zeros((box.nx, box.ny), dtype=bool)
    tmask = box.mask(target)
    for e in excursions:
        p = e.path.sites if hasattr(e, "path") else np.asarray(e)
        q = p - np.array([box.x0, box.y0])
        ok = (q[:, 0] >= 0) & (q[:, 0] < box.nx) & (q[:, 1] >= 0) & (q[:, 1] < box.ny)
        hit[q[ok, 0], q[ok, 1]] = True
    return CoverageState(target, box.sites(hit & tmask))


@dataclass
class TorusRun:
    n: int
    gamma: float
    beta: float
    m: int
    horizon: int
    count: int
    coverage: CoverageState
    entries: np.ndarray


def _torus_labels(n, gamma):
    m = torus_side(n, gamma)
    torus = TorusSpec(m)
    inner, outer = _annulus(n, gamma)
    emb = torus_embed(outer, torus)
    label = np.zeros((m, m), dtype=np.int64)
    in_target = np.zeros((m, m), dtype=bool)
    b = emb(ball_sites(inner))
    in_target[b[:, 0], b[:, 1]] = True
    bi = emb(inner_boundary(ball_sites(inner)))
    bo = emb(inner_boundary(ball_sites(outer)))
    label[bi[:, 0], bi[:, 1]] = 1
    label[bo[:, 0], bo[:, 1]] = 2
    return torus, emb, label, in_target


def torus_excursion_experiment(n: int, gamma: float, beta: float, rng) -> TorusRun:
    """Run torus SRW from a uniform site up to t_{m, beta/3}.

    Counts completed excursions between dB(n) and dB(gamma n) (embedded at
    the torus centre, m = floor(3 gamma n)) and reports coverage of B(n).
    """
    if n < 8:
        raise ValueError("n must be at least 8")
    rng = as_generator(rng)
    torus, emb, label, in_target = _torus_labels(n, gamma)
    m = torus.m
    t = int(math.floor(t_threshold(m, beta / 3)))
    start = rng.integers(0, m, size=2)
    count, visited, entries = K.torus_excursion_scan(
        m, int(start[0]), int(start[1]), t, _kernel_seed(rng), label, in_target)
    off = emb.offset
    target = ball_sites(Disk((0, 0), n))
    vis = np.argwhere(visited) - off
    vis = vis[np.lexsort((vis[:, 1], vis[:, 0]))]
    return TorusRun(n, gamma, beta, m, t, int(count), CoverageState(target, vis.astype(np.int64)),
                    (entries - off).astype(np.int64))


@dataclass
class PackingLayout:
    h: float
    radius: float
    centers: np.ndarray
    diagnostic: str = ""

    @property
    def kappa(self) -> int:
        return len(self.centers)


def disk_packing(n: int, h: float, gamma: float) -> PackingLayout:
    """Square-grid packing of disjoint disks B(x_j, gamma n / h) inside B(n).

    Grid spacing is ceil(2 gamma n / h) + 1; of the four half-spacing grid
    offsets the one fitting the most disks is kept.
    """
    if not h > gamma:
        raise ValueError(f"need h > gamma, got h={h}, gamma={gamma}")
    rho = gamma * n / h
    spacing = math.ceil(2 * rho) + 1
    best = np.empty((0, 2), dtype=np.int64)
    for ox in (0, spacing // 2):
        for oy in (0, spacing // 2):
            k = n // spacing + 1
            g = np.arange(-k, k + 1) * spacing
            X, Y = np.meshgrid(g + ox, g + oy, indexing="ij")
            c = np.stack([X.ravel(), Y.ravel()], axis=1)
            keep = np.sqrt((c * c).sum(axis=1).astype(float)) + rho <= n
            c = c[keep]
            if len(c) > len(best):
                best = c
    diag = "" if len(best) else f"no disk of radius {rho:.3g} fits in B({n})"
    return PackingLayout(h, rho, as_sites(best) if len(best) else best, diag)


# -- torus return law -----------------------------------------------------

@dataclass
class TorusReturnKernel:
    """Hitting law of dB(n) on Z^2_m from each site of dB(gamma n).

    Sites are in centred Z^2 coordinates.  ``matrix[i, j]`` is the
    probability that the torus walk from ``outer[i]`` first hits B(n) at
    ``inner[j]``.  ``stationary`` is hm_{B(n)}^{B(gamma n)} on ``inner``.
    """

    n: int
    gamma: float
    m: int
    inner: np.ndarray
    outer: np.ndarray
    matrix: np.ndarray
    stationary: np.ndarray

    def row(self, x) -> np.ndarray:
        i = np.flatnonzero(np.all(self.outer == np.asarray(x), axis=1))
        if len(i) != 1:
            raise KeyError(f"{x} is not on the outer boundary")
        return self.matrix[i[0]]


def _solve_torus_return(n, gamma):
    m = torus_side(n, gamma)
    torus, emb, label, in_target = _torus_labels(n, gamma)
    inner = inner_boundary(ball_sites(Disk((0, 0), n)))
    outer = inner_boundary(ball_sites(Disk((0, 0), gamma * n)))
    unk = ~in_target
    idx = np.full((m, m), -1, dtype=np.int64)
    N = int(unk.sum())
    idx[unk] = np.arange(N)
    bidx = np.full((m, m), -1, dtype=np.int64)
    ti = emb(inner)
    bidx[ti[:, 0], ti[:, 1]] = np.arange(len(inner))
    I, J = np.nonzero(unk)
    me = idx[I, J]
    rows, cols, vals = [me], [me], [np.full(N, 4.0)]
    brow, bcol = [], []
    for dx, dy in STEPS:
        In, Jn = (I + dx) % m, (J + dy) % m
        nb = idx[In, Jn]
        ok = nb >= 0
        rows.append(me[ok])
        cols.append(nb[ok])
        vals.append(-np.ones(ok.sum()))
        brow.append(me[~ok])
        bcol.append(bidx[In[~ok], Jn[~ok]])
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    Bm = sp.csc_matrix((np.ones(sum(map(len, brow))), (np.concatenate(brow), np.concatenate(bcol))),
                       shape=(N, len(inner)))
    lu = spla.splu(A)
    to = emb(outer)
    want = idx[to[:, 0], to[:, 1]]
    H = np.empty((len(outer), len(inner)))
    for s in range(0, len(inner), 48):
        sol = lu.solve(Bm[:, s:s + 48].toarray())
        H[:, s:s + 48] = sol[want]
    H = np.clip(H, 0.0, None)
    H /= H.sum(axis=1, keepdims=True)
    stat = conditional_harmonic_measure(ball_sites(Disk((0, 0), n)),
                                        ball_sites(Disk((0, 0), gamma * n)))
    order = {tuple(p): w for p, w in zip(stat.support.tolist(), stat.weights)}
    st = np.array([order[tuple(p)] for p in inner.tolist()])
    return TorusReturnKernel(n, gamma, m, inner, outer, H, st)


def torus_return_kernel(n: int, gamma: float, use_cache: bool = True) -> TorusReturnKernel:
    path = cache_dir() / f"torus_return_v1_n{n}_g{gamma:.12g}.npz"
    if use_cache and path.exists():
        with np.load(path) as f:
            return TorusReturnKernel(int(f["n"]), float(f["gamma"]), int(f["m"]), f["inner"],
                                     f["outer"], f["matrix"], f["stationary"])
    k = _solve_torus_return(n, gamma)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, n=k.n, gamma=k.gamma, m=k.m, inner=k.inner, outer=k.outer,
                 matrix=k.matrix, stationary=k.stationary)
        os.replace(tmp, path)
    return k
