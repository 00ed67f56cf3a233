"""Trajectory generation: SRW on Z^2 and on tori, the conditioned walk, and
excursion extraction."""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Callable

import numpy as np

from . import _kernels as K
from .lattice import STEPS, Box, TorusSpec, as_sites, inner_boundary
from .potential import PotentialTable, default_table

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10**9


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, stream id).

    ``spawn`` derives child streams; identical keys give identical draws.
    """

    seed: int
    stream: tuple[int, ...] = (0,)

    def __post_init__(self):
        s = self.stream if isinstance(self.stream, tuple) else (self.stream,)
        object.__setattr__(self, "stream", tuple(int(k) for k in s))

    def spawn(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def _kernel_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


class TruncationError(RuntimeError):
    """The step budget ran out; ``partial`` holds the path so far."""

    def __init__(self, partial: "PathSegment", budget: int):
        super().__init__(f"walk truncated after {budget} steps")
        self.partial = partial


@dataclass
class PathSegment:
    """A finite piece of a nearest-neighbour trajectory.

    ``clock`` is the time index of ``sites[0]``; it may be negative for the
    backward half of a two-sided trajectory.  ``tries`` counts the proposals
    a rejection sampler needed to produce the segment.
    """

    sites: np.ndarray
    clock: int = 0
    tries: int = 1

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def start(self) -> np.ndarray:
        return self.sites[0]

    @property
    def end(self) -> np.ndarray:
        return self.sites[-1]

    def is_nearest_neighbor(self) -> bool:
        if len(self.sites) < 2:
            return True
        return bool(np.all(np.abs(np.diff(self.sites, axis=0)).sum(axis=1) == 1))


def _stop_raster(stop) -> tuple[np.ndarray, int, int]:
    pts = as_sites(stop)
    box = Box.around(pts, margin=0)
    return box.mask(pts), box.x0, box.y0


def srw_path(start, stop, rng, max_steps: int = DEFAULT_MAX_STEPS,
             record: bool = True) -> PathSegment:
    """SRW from ``start`` until it first stands on a site of ``stop``.

    ``stop`` is a finite set of sites or a predicate on a site (slow path).
    The start itself is tested, so a start inside ``stop`` gives a one-site
    path.  With ``record=False`` only the final site is kept.
    """
    rng = as_generator(rng)
    x, y = (int(v) for v in start)
    if callable(stop):
        return _srw_path_python(x, y, stop, rng, max_steps)
    mask, x0, y0 = _stop_raster(stop)
    sites, status, steps, xe, ye = K.srw_until(x, y, _kernel_seed(rng), mask, x0, y0,
                                               max_steps, record)
    seg = PathSegment(sites if record else np.array([[xe, ye]], dtype=np.int64))
    if status == K.TRUNCATED:
        raise TruncationError(seg, max_steps)
    return seg


def _srw_path_python(x, y, stop: Callable, rng, max_steps) -> PathSegment:
    out = [(x, y)]
    steps = 0
    while not stop((x, y)):
        if steps >= max_steps:
            raise TruncationError(PathSegment(np.array(out, dtype=np.int64)), max_steps)
        dx, dy = STEPS[rng.integers(4)]
        x, y = x + int(dx), y + int(dy)
        out.append((x, y))
        steps += 1
    return PathSegment(np.array(out, dtype=np.int64))


def torus_srw_path(torus: TorusSpec, start, t: int, rng) -> PathSegment:
    """Exactly t steps of SRW on Z^2_m from ``start``."""
    if t < 0:
        raise ValueError("horizon must be nonnegative")
    rng = as_generator(rng)
    x, y = (int(v) % torus.m for v in start)
    return PathSegment(K.torus_path(torus.m, x, y, int(t), _kernel_seed(rng)))


def conditioned_step_distribution(x, table: PotentialTable | None = None):
    """Neighbours of x and the conditioned-walk transition masses a(y) / (4 a(x))."""
    table = table or default_table()
    x = np.asarray(x, dtype=np.int64).reshape(2)
    if not x.any():
        raise ValueError("the conditioned walk is not defined at the origin")
    nbrs = x + STEPS
    p = table(nbrs) / (4 * table(x[None])[0])
    return nbrs, p


def _table_args(table: PotentialTable):
    return np.nan_to_num(table.grid, nan=0.0), table.R, table.kappa


_EMPTY = np.zeros((1, 1), dtype=bool)


def conditioned_path(start, stop, table: PotentialTable | None, rng, *,
                     taboo=None, kill_radius: float | None = None,
                     max_steps: int = DEFAULT_MAX_STEPS, max_tries: int = 10**6,
                     record: bool = True) -> PathSegment:
    """Conditioned-walk path from ``start`` until it stands on ``stop``.

    The walk also ends, deemed escaped, on leaving B(0, kill_radius).  With
    ``taboo`` the path is resampled until it avoids the taboo set after time
    0; ``tries`` on the result counts proposals.  With ``record=False``
    only the final site is kept.
    """
    table = table or default_table()
    rng = as_generator(rng)
    x, y = (int(v) for v in start)
    if x == 0 and y == 0:
        raise ValueError("the conditioned walk cannot start at the origin")
    grid, R, kappa = _table_args(table)
    if stop is None or len(as_sites(stop)) == 0:
        tmask, tx0, ty0, stop_on = _EMPTY, 0, 0, False
    else:
        tmask, tx0, ty0 = _stop_raster(stop)
        stop_on = True
    if taboo is None:
        fmask, fx0, fy0 = _EMPTY, 0, 0
    else:
        fmask, fx0, fy0 = _stop_raster(taboo)
    obs_r2 = -1 if kill_radius is None else int(np.floor(kill_radius**2))
    if obs_r2 < 0 and not stop_on:
        raise ValueError("need a stop set or a kill radius")
    for tries in range(1, max_tries + 1):
        sites, status, steps, xe, ye = K.conditioned_until(
            x, y, _kernel_seed(rng), grid, R, kappa, 0, 0, obs_r2,
            tmask, tx0, ty0, fmask, fx0, fy0, stop_on, max_steps, record)
        if not record:
            sites = np.array([[xe, ye]], dtype=np.int64)
        if status == K.TRUNCATED:
            raise TruncationError(PathSegment(sites, tries=tries), max_steps)
        if status != K.TABOO:
            if taboo is not None and tries > 1:
                log.debug("taboo acceptance %.3f", 1 / tries)
            return PathSegment(sites, tries=tries)
    raise RuntimeError(f"taboo rejection sampler gave up after {max_tries} tries")


@dataclass
class Excursion:
    """Path piece from a visit to dA up to the next visit to dA'."""

    path: PathSegment
    entry: tuple[int, int]
    exit: tuple[int, int]
    annulus: tuple = field(default=())


def extract_excursions(path: PathSegment, A, A_outer, annulus: tuple = ()) -> list[Excursion]:
    """Completed excursions between dA and dA' along ``path``, in order."""
    bd_in = inner_boundary(A)
    bd_out = inner_boundary(A_outer)
    box = Box.around(np.vstack([bd_in, bd_out]), margin=0)
    m_in, m_out = box.mask(bd_in), box.mask(bd_out)
    p = path.sites
    q = p - np.array([box.x0, box.y0])
    ok = (q[:, 0] >= 0) & (q[:, 0] < box.nx) & (q[:, 1] >= 0) & (q[:, 1] < box.ny)
    lab_in = np.zeros(len(p), dtype=bool)
    lab_out = np.zeros(len(p), dtype=bool)
    lab_in[ok] = m_in[q[ok, 0], q[ok, 1]]
    lab_out[ok] = m_out[q[ok, 0], q[ok, 1]]
    starts = np.flatnonzero(lab_in)
    ends = np.flatnonzero(lab_out)
    out = []
    pos = 0
    while True:
        i = np.searchsorted(starts, pos)
        if i == len(starts):
            break
        s = starts[i]
        j = np.searchsorted(ends, s, side="right")
        if j == len(ends):
            break
        e = ends[j]
        seg = PathSegment(p[s:e + 1].copy(), clock=path.clock + int(s))
        out.append(Excursion(seg, tuple(p[s].tolist()), tuple(p[e].tolist()), annulus))
        pos = e + 1
    return out


# -- binary trace format ----------------------------------------------------

TRACE_MAGIC = b"RI2DTRC"
TRACE_VERSION = 1


def write_trace(segments, fh: BinaryIO) -> None:
    """Write nearest-neighbour segments as 2-bit delta-encoded steps."""
    segments = list(segments)
    fh.write(TRACE_MAGIC + struct.pack("<BI", TRACE_VERSION, len(segments)))
    for seg in segments:
        if not seg.is_nearest_neighbor():
            raise ValueError("trace segments must be nearest-neighbour paths")
        d = np.diff(seg.sites, axis=0)
        codes = (np.where(d[:, 0] != 0, (d[:, 0] < 0).astype(np.uint8),
                          2 + (d[:, 1] < 0).astype(np.uint8))).astype(np.uint8)
        pad = (-len(codes)) % 4
        c = np.concatenate([codes, np.zeros(pad, np.uint8)]).reshape(-1, 4)
        packed = (c[:, 0] | (c[:, 1] << 2) | (c[:, 2] << 4) | (c[:, 3] << 6)).astype(np.uint8)
        x, y = (int(v) for v in seg.sites[0])
        fh.write(struct.pack("<qqqQ", seg.clock, x, y, len(codes)))
        fh.write(packed.tobytes())


def read_trace(fh: BinaryIO) -> list[PathSegment]:
    head = fh.read(len(TRACE_MAGIC) + 5)
    if head[:len(TRACE_MAGIC)] != TRACE_MAGIC:
        raise ValueError("not a ri2d trace")
    version, count = struct.unpack("<BI", head[len(TRACE_MAGIC):])
    if version != TRACE_VERSION:
        raise ValueError(f"unsupported trace version {version}")
    out = []
    for _ in range(count):
        clock, x, y, n = struct.unpack("<qqqQ", fh.read(32))
        raw = np.frombuffer(fh.read((n + 3) // 4), dtype=np.uint8)
        codes = np.stack([raw & 3, (raw >> 2) & 3, (raw >> 4) & 3, (raw >> 6) & 3],
                         axis=1).reshape(-1)[:n]
        steps = STEPS[codes]
        sites = np.vstack([[x, y], np.array([x, y]) + np.cumsum(steps, axis=0)])
        out.append(PathSegment(sites.astype(np.int64), clock=clock))
    return out


def trace_bytes(segments) -> bytes:
    buf = io.BytesIO()
    write_trace(segments, buf)
    return buf.getvalue()
