"""Random interlacements on finite windows.

Trajectories of RI(alpha) that hit a finite set K are generated from their
first entrance to K.  Walks are simulated step by step inside an
observation disk around K.  On leaving it, the exact conditioned-walk
return law to K decides whether the trajectory comes back and where it
re-enters.  The unobserved stretch outside the disk is skipped (a "jump"),
so visits to K are exact while the stored path pieces stop at the disk.
With ``exact_returns=False`` the walk is simply killed at the disk instead.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .lattice import Box, Disk, as_sites, inner_boundary
from .potential import HittingKernel, PotentialTable, default_table
from .walks import PathSegment, TruncationError, _kernel_seed, _table_args, as_generator

_EMPTY = np.zeros((1, 1), dtype=bool)
MAX_STEPS = 10**8


@dataclass
class Trajectory:
    """Observed pieces of one two-sided trajectory, in time order.

    Consecutive pieces are separated by an unobserved excursion outside the
    observation disk; clocks after such a gap count observed steps only.
    ``tau_minus`` and ``tau_plus`` are the clocks of the first and last
    visits to K.
    """

    pieces: list
    tau_minus: int
    tau_plus: int
    jumps: int = 0

    @property
    def sites(self) -> np.ndarray:
        return np.vstack([p.sites for p in self.pieces])

    def inner_pieces(self) -> list:
        out = []
        for p in self.pieces:
            lo = max(self.tau_minus, p.clock)
            hi = min(self.tau_plus, p.clock + len(p) - 1)
            if lo <= hi:
                out.append(PathSegment(p.sites[lo - p.clock:hi - p.clock + 1], clock=lo))
        return out

    def inner_max_norm(self) -> float:
        if self.jumps:
            return math.inf
        return max(float(np.sqrt((q.sites ** 2).sum(axis=1)).max()) for q in self.inner_pieces())


class _Returns:
    """Exact return decisions for the conditioned walk to a set A containing 0."""

    def __init__(self, A, table: PotentialTable):
        self.kernel = HittingKernel(A, table)
        self.table = table
        self.boundary = self.kernel.boundary
        w = self.kernel.hm.weights * table(self.boundary)
        self.cap = float(w.sum())
        keep = w > 0
        self.entry_sites = self.boundary[keep]
        self.entry_weights = w[keep] / w.sum()
        self.box = Box.around(self.kernel.A, margin=0)
        self.mask = self.box.mask(self.kernel.A[np.any(self.kernel.A != 0, axis=1)])

    def law(self, x) -> np.ndarray:
        return self.kernel.conditioned_return(x)

    def return_prob(self, x) -> float:
        return float(min(1.0, self.law(x).sum()))

    def decide(self, x, rng) -> tuple[int, int] | None:
        p = self.law(x)
        u = rng.random()
        c = np.cumsum(p)
        if u >= c[-1]:
            return None
        return tuple(self.boundary[int(np.searchsorted(c, u, side="right"))].tolist())


@lru_cache(maxsize=32)
def _returns_cached(key: bytes, n: int, table_id: int) -> _Returns:
    pts = np.frombuffer(key, dtype=np.int64).reshape(n, 2)
    return _Returns(pts, _TABLES[table_id])


_TABLES: dict[int, PotentialTable] = {}


def returns_for(K_sites, table: PotentialTable | None = None) -> _Returns:
    table = table or default_table()
    _TABLES[id(table)] = table
    A = as_sites(np.vstack([as_sites(K_sites), [[0, 0]]]))
    return _returns_cached(A.tobytes(), len(A), id(table))


@dataclass(frozen=True)
class Observation:
    center: tuple[int, int]
    radius: float
    exact_returns: bool = True

    @property
    def r2(self) -> int:
        return Disk(self.center, self.radius).r2


def default_observation(K_sites, exact_returns: bool = True, factor: float = math.e) -> Observation:
    pts = as_sites(K_sites)
    c = np.round(pts.mean(axis=0)).astype(np.int64)
    r = float(np.sqrt(((pts - c) ** 2).sum(axis=1)).max())
    return Observation((int(c[0]), int(c[1])), factor * max(r, 1.0) + 2, exact_returns)


def _walk(x, y, rng, grid, R, kappa, obs: Observation, taboo=None):
    if taboo is None:
        fmask, fx0, fy0 = _EMPTY, 0, 0
    else:
        fmask, fx0, fy0 = taboo
    sites, status, steps, _, _ = K.conditioned_until(
        int(x), int(y), _kernel_seed(rng), grid, R, kappa, obs.center[0], obs.center[1], obs.r2,
        _EMPTY, 0, 0, fmask, fx0, fy0, False, MAX_STEPS, True)
    if status == K.TRUNCATED:
        raise TruncationError(PathSegment(sites), MAX_STEPS)
    return sites, status


def _forward(x0, ret: _Returns, obs: Observation, rng, table, max_jumps: int = 10**6):
    """Conditioned walk from x0 until it leaves for good; pieces and jumps."""
    grid, R, kappa = _table_args(table)
    pieces, jumps, clock = [], 0, 0
    x = x0
    while True:
        sites, _ = _walk(x[0], x[1], rng, grid, R, kappa, obs)
        pieces.append(PathSegment(sites, clock=clock))
        clock += len(sites)
        if not obs.exact_returns:
            return pieces, jumps
        back = ret.decide(sites[-1], rng)
        if back is None:
            return pieces, jumps
        jumps += 1
        if jumps > max_jumps:
            raise RuntimeError("too many returns")
        x = back


def _escape(x0, ret: _Returns, obs: Observation, rng, table, max_tries: int = 10**6):
    """Conditioned walk from x0 never returning to K after time 0."""
    grid, R, kappa = _table_args(table)
    taboo = (ret.mask, ret.box.x0, ret.box.y0)
    for tries in range(1, max_tries + 1):
        sites, status = _walk(x0[0], x0[1], rng, grid, R, kappa, obs, taboo)
        if status == K.TABOO:
            continue
        if obs.exact_returns and ret.decide(sites[-1], rng) is not None:
            continue
        return PathSegment(sites, tries=tries)
    raise RuntimeError("escape sampler gave up")


def _in_set(points, mask, box) -> np.ndarray:
    q = np.asarray(points) - np.array([box.x0, box.y0])
    ok = (q[:, 0] >= 0) & (q[:, 0] < box.nx) & (q[:, 1] >= 0) & (q[:, 1] < box.ny)
    out = np.zeros(len(q), dtype=bool)
    out[ok] = mask[q[ok, 0], q[ok, 1]]
    return out


def sample_inner(x0, K_sites, obs: Observation, rng, table=None) -> Trajectory:
    """Forward part from the first entrance x0; tau_plus is the last K visit."""
    table = table or default_table()
    ret = returns_for(K_sites, table)
    rng = as_generator(rng)
    pieces, jumps = _forward(tuple(int(v) for v in x0), ret, obs, rng, table)
    last = 0
    for p in pieces:
        hit = np.flatnonzero(_in_set(p.sites, ret.mask, ret.box))
        if len(hit):
            last = p.clock + int(hit[-1])
    return Trajectory(pieces, 0, last, jumps)


def sample_trajectory(x0, K_sites, obs: Observation, rng, table=None) -> Trajectory:
    """Two-sided trajectory through its first entrance x0 to K."""
    table = table or default_table()
    rng = as_generator(rng)
    tr = sample_inner(x0, K_sites, obs, rng, table)
    back = _escape(tuple(int(v) for v in x0), returns_for(K_sites, table), obs, rng, table)
    if len(back) > 1:
        rev = PathSegment(back.sites[:0:-1].copy(), clock=-(len(back) - 1), tries=back.tries)
        tr.pieces.insert(0, rev)
    return tr


@dataclass
class HittingBundle:
    K: np.ndarray
    alpha: float
    observation: Observation
    trajectories: list
    capacity: float

    @property
    def xi_K(self) -> int:
        return len(self.trajectories)

    @property
    def D_K(self) -> float:
        if not self.trajectories:
            return 0.0
        return max(t.inner_max_norm() for t in self.trajectories)

    @property
    def tau_minus(self) -> list:
        return [t.tau_minus for t in self.trajectories]

    @property
    def tau_plus(self) -> list:
        return [t.tau_plus for t in self.trajectories]


def sample_hitting_bundle(K_sites, alpha: float, kill_radius: float | None, rng, *,
                          table: PotentialTable | None = None, exact_returns: bool = True,
                          two_sided: bool = True) -> HittingBundle:
    """The trajectories of RI(alpha) that visit K.

    ``kill_radius`` is the radius, around the centre of K, of the disk where
    walks are simulated step by step (default e times the radius of K, plus
    2).  With ``two_sided=False`` only the parts from tau_minus on are drawn.
    """
    table = table or default_table()
    rng = as_generator(rng)
    Ks = as_sites(K_sites)
    if len(Ks) == 0:
        raise ValueError("K must be nonempty")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    obs = default_observation(Ks, exact_returns)
    if kill_radius is not None:
        obs = Observation(obs.center, float(kill_radius), exact_returns)
    d = Ks - np.asarray(obs.center)
    if (d * d).sum(axis=1).max() >= obs.r2:
        raise ValueError("kill radius must exceed the extent of K")
    nonzero = Ks[np.any(Ks != 0, axis=1)]
    if len(nonzero) == 0:
        return HittingBundle(Ks, alpha, obs, [], 0.0)
    ret = returns_for(Ks, table)
    xi = int(rng.poisson(math.pi * alpha * ret.cap)) if alpha > 0 else 0
    trajs = []
    for _ in range(xi):
        x0 = ret.entry_sites[rng.choice(len(ret.entry_weights), p=ret.entry_weights)]
        f = sample_trajectory if two_sided else sample_inner
        trajs.append(f(x0, Ks, obs, rng, table))
    return HittingBundle(Ks, alpha, obs, trajs, ret.cap)


def _hits(traj, mask, box) -> bool:
    pieces = traj.pieces if isinstance(traj, Trajectory) else [traj]
    return any(_in_set(p.sites, mask, box).any() for p in pieces)


def decompose(trajectories, K_sites) -> tuple[list, list]:
    """Split into (theta_K, sigma_K): trajectories avoiding / hitting K."""
    Ks = as_sites(K_sites)
    box = Box.around(Ks, margin=0)
    mask = box.mask(Ks)
    theta, sigma = [], []
    for t in trajectories:
        (sigma if len(Ks) and _hits(t, mask, box) else theta).append(t)
    return theta, sigma


# -- noodles ----------------------------------------------------------------

@dataclass(frozen=True)
class Noodle:
    sites: np.ndarray
    start: int
    trajectory: int = 0
    two_sided: bool = False
    truncated: bool = False

    def key(self) -> tuple:
        return tuple(map(tuple, self.sites.tolist()))


@dataclass
class NoodleConfig:
    """Multiset of noodles on a host set A.  Equality ignores order."""

    A: np.ndarray
    noodles: list = field(default_factory=list)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NoodleConfig):
            return NotImplemented
        return np.array_equal(self.A, other.A) and \
            sorted(n.key() for n in self.noodles) == sorted(n.key() for n in other.noodles)

    def __len__(self) -> int:
        return len(self.noodles)

    def local_times(self) -> dict:
        out: dict = {}
        for nd in self.noodles:
            for p in map(tuple, nd.sites.tolist()):
                out[p] = out.get(p, 0) + 1
        return out

    def occupied(self) -> np.ndarray:
        if not self.noodles:
            return np.empty((0, 2), dtype=np.int64)
        return as_sites(np.vstack([n.sites for n in self.noodles]))

    def vacant(self) -> np.ndarray:
        occ = self.occupied()
        box = Box.around(self.A, margin=0)
        m = box.mask(self.A)
        if len(occ):
            m[occ[:, 0] - box.x0, occ[:, 1] - box.y0] = False
        return box.sites(m)

    def records(self) -> list[dict]:
        nds = sorted(self.noodles, key=lambda n: (n.trajectory, n.start))
        return [{"trajectory": n.trajectory, "start": n.start, "sites": n.sites.tolist(),
                 "two_sided": n.two_sided} for n in nds]

    def to_json(self) -> str:
        return json.dumps({"A": self.A.tolist(), "noodles": self.records()},
                          separators=(",", ":"), sort_keys=True)

    def canonical_bytes(self) -> bytes:
        """Order-free encoding: noodles sorted by their site sequences."""
        buf = io.BytesIO()
        buf.write(self.A.tobytes())
        for nd in sorted(self.noodles, key=lambda n: n.key()):
            buf.write(len(nd.sites).to_bytes(8, "little"))
            buf.write(np.ascontiguousarray(nd.sites, dtype="<i8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_json(cls, text: str) -> "NoodleConfig":
        d = json.loads(text)
        A = np.asarray(d["A"], dtype=np.int64).reshape(-1, 2)
        nds = [Noodle(np.asarray(r["sites"], dtype=np.int64).reshape(-1, 2), r["start"],
                      r["trajectory"], r["two_sided"]) for r in d["noodles"]]
        return cls(A, nds)


def _pieces(t):
    if isinstance(t, Trajectory):
        return t.pieces
    if isinstance(t, PathSegment):
        return [t]
    return [PathSegment(np.asarray(t, dtype=np.int64).reshape(-1, 2))]


def noodle_config(trajectories, A, *, predicate=None) -> NoodleConfig:
    """Maximal runs of each trajectory inside A.

    A is a finite site set, or ``predicate`` (vectorised, points -> bool)
    describes an arbitrary host set and A is kept only as a label.
    """
    Ah = as_sites(A) if A is not None else np.empty((0, 2), dtype=np.int64)
    if predicate is None:
        box = Box.around(Ah, margin=0)
        mask = box.mask(Ah)

        def predicate(p):
            return _in_set(p, mask, box)
    out = []
    for tid, t in enumerate(trajectories):
        for piece in _pieces(t):
            inside = predicate(piece.sites)
            if not inside.any():
                continue
            d = np.diff(np.concatenate([[0], inside.astype(np.int8), [0]]))
            starts = np.flatnonzero(d == 1)
            ends = np.flatnonzero(d == -1)
            for s, e in zip(starts, ends):
                trunc = s == 0 or e == len(inside)
                out.append(Noodle(piece.sites[s:e].copy(), piece.clock + int(s), tid, False,
                                  bool(trunc)))
    return NoodleConfig(Ah, out)


def direct_local_times(trajectories, A) -> dict:
    Ah = as_sites(A)
    box = Box.around(Ah, margin=0)
    mask = box.mask(Ah)
    out: dict = {}
    for t in trajectories:
        for piece in _pieces(t):
            for p in map(tuple, piece.sites[_in_set(piece.sites, mask, box)].tolist()):
                out[p] = out.get(p, 0) + 1
    return out


def vacant_set_window(window: Disk, alpha: float, rng, *, kill_radius: float | None = None,
                      exact_returns: bool = True, table: PotentialTable | None = None,
                      return_bundle: bool = False):
    """Sites of ``window`` not visited by RI(alpha)."""
    from .lattice import ball_sites
    W = ball_sites(window)
    bundle = sample_hitting_bundle(W, alpha, kill_radius, rng, table=table,
                                   exact_returns=exact_returns, two_sided=False)
    cfg = noodle_config(bundle.trajectories, W)
    vac = cfg.vacant()
    return (vac, bundle, cfg) if return_bundle else vac


def alpha_thinning(bundle: HittingBundle, alpha_new: float, rng) -> HittingBundle:
    """Keep each trajectory with probability alpha_new / alpha."""
    if not 0 < alpha_new <= bundle.alpha:
        raise ValueError("need 0 < alpha' <= alpha")
    rng = as_generator(rng)
    if alpha_new == bundle.alpha:
        return bundle
    keep = rng.random(len(bundle.trajectories)) < alpha_new / bundle.alpha
    kept = [t for t, k in zip(bundle.trajectories, keep) if k]
    return HittingBundle(bundle.K, alpha_new, bundle.observation, kept, bundle.capacity)
