"""Poisson total variation, maximal couplings, the SRW / conditioned-walk
mark coupling, and the staged coupling of two interlacement copies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats as sps

from . import _kernels as K
from .interlacements import (_EMPTY, Observation, _in_set, _table_args, _walk, noodle_config,
                             returns_for, sample_inner)
from .lattice import STEPS, Box, Disk, as_sites, ball_sites, inner_boundary, outer_boundary
from .potential import PotentialTable, default_table
from .walks import PathSegment, RngStream, _kernel_seed, as_generator

STAGES = ("inner_event", "count_coupling", "entry_coupling", "trajectory_reuse")
_TAIL = 1e-16


def _check_rate(lam):
    if not lam > 0 or not math.isfinite(lam):
        raise ValueError(f"Poisson rate must be positive, got {lam}")


def _poisson_range(*lams, shift: int = 0) -> np.ndarray:
    lo = int(min(sps.poisson.ppf(_TAIL, l) for l in lams))
    hi = int(max(sps.poisson.isf(_TAIL, l) for l in lams)) + shift + 1
    return np.arange(max(lo, 0), hi + 1)


def poisson_tv(lambda1: float, lambda2: float) -> float:
    """d_TV(Poisson(lambda1), Poisson(lambda2)) by term-wise summation."""
    _check_rate(lambda1)
    _check_rate(lambda2)
    if lambda1 == lambda2:
        return 0.0
    k = _poisson_range(lambda1, lambda2)
    p = np.exp(sps.poisson.logpmf(k, lambda1))
    q = np.exp(sps.poisson.logpmf(k, lambda2))
    return min(1.0, float(0.5 * np.abs(p - q).sum()))


def poisson_shift_tv(lam: float) -> float:
    """d_TV(Poisson(lam), 1 + Poisson(lam)) = E|X / lam - 1| / 2."""
    _check_rate(lam)
    k = _poisson_range(lam)
    p = np.exp(sps.poisson.logpmf(k, lam))
    return min(1.0, float(0.5 * (p * np.abs(k / lam - 1.0)).sum()))


def tv_bound(lam: float, h: float) -> float:
    """sqrt(exp(h^2 / lam) - 1) / 2."""
    return 0.5 * math.sqrt(math.expm1(h * h / lam))


def maximal_coupling(p: np.ndarray, q: np.ndarray, u: float) -> tuple[int, int, bool]:
    """Indices (i, j) from laws p and q driven by one uniform u.

    With probability sum(min(p, q)) both come from the overlap and agree;
    otherwise they come from the disjoint residuals (p - q)+ and (q - p)+
    by inverse CDF at the same rescaled uniform.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = np.minimum(p, q)
    s = m.sum()
    if u < s:
        i = int(np.searchsorted(np.cumsum(m), u, side="right"))
        i = min(i, len(m) - 1)
        return i, i, True
    w = (u - s) / (1.0 - s) if s < 1 else 0.0
    rp, rq = np.clip(p - q, 0, None), np.clip(q - p, 0, None)
    i = min(int(np.searchsorted(np.cumsum(rp) / rp.sum(), w, side="right")), len(p) - 1)
    j = min(int(np.searchsorted(np.cumsum(rq) / rq.sum(), w, side="right")), len(q) - 1)
    return i, j, False


def shifted_poisson_tv(lambdaI: float, lambdaJ: float, shift: int) -> float:
    """d_TV(Poisson(lambdaI), shift + Poisson(lambdaJ))."""
    p, q, _ = _count_laws(lambdaI, lambdaJ, shift)
    return min(1.0, float(0.5 * np.abs(p - q).sum()))


def _count_laws(lambdaI, lambdaJ, shift):
    _check_rate(lambdaI)
    _check_rate(lambdaJ)
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    k = np.arange(0, _poisson_range(lambdaI, lambdaJ, shift=shift)[-1] + 1)
    p = np.exp(sps.poisson.logpmf(k, lambdaI))
    q = np.where(k >= shift, np.exp(sps.poisson.logpmf(k - shift, lambdaJ)), 0.0)
    return p, q, k


def count_coupling(lambdaI: float, lambdaJ: float, shift: int, rng) -> tuple[int, int, bool]:
    """Maximal coupling of Poisson(lambdaI) and shift + Poisson(lambdaJ)."""
    rng = as_generator(rng)
    p, q, k = _count_laws(lambdaI, lambdaJ, int(shift))
    i, j, ok = maximal_coupling(p, q, rng.random())
    return int(k[i]), int(k[j]), ok


# -- mark coupling ----------------------------------------------------------

@dataclass
class MarkCoupling:
    success: bool
    srw: np.ndarray
    conditioned: np.ndarray
    steps: int


def mark_coupling(entry, annulus: tuple[Disk, Disk], rng, table: PotentialTable | None = None,
                  method: str = "step", max_steps: int = 10**8) -> MarkCoupling:
    """Couple an SRW excursion and a conditioned-walk excursion from ``entry``.

    ``method="step"`` couples step by step (maximal coupling of the two
    one-step laws on a shared uniform).  ``method="path"`` is the maximal
    coupling of the two path laws: an SRW excursion is kept for both with
    probability min(1, a(end) / a(entry)), the likelihood ratio of the
    conditioned walk, which telescopes along the path.
    """
    table = table or default_table()
    rng = as_generator(rng)
    B, Bp = annulus
    if Bp.contains(np.zeros((1, 2), dtype=np.int64))[0]:
        raise ValueError("the annulus must not contain the origin")
    x = np.asarray(entry, dtype=np.int64).reshape(2)
    if not B.contains(x[None])[0]:
        raise ValueError("entry must lie in B")
    stop = inner_boundary(ball_sites(Bp))
    box = Box.around(stop, margin=0)
    mask = box.mask(stop)
    grid, R, kappa = _table_args(table)
    if method == "step":
        ok, steps, path = K.coupled_steps(int(x[0]), int(x[1]), _kernel_seed(rng), grid, R, kappa,
                                          mask, box.x0, box.y0, max_steps)
        return MarkCoupling(bool(ok), path, path.copy() if ok else path[:0], int(steps))
    if method != "path":
        raise ValueError(f"unknown method {method!r}")
    path, status, steps, ex, ey = K.srw_until(int(x[0]), int(x[1]), _kernel_seed(rng), mask,
                                             box.x0, box.y0, max_steps, True)
    r = table.value(int(ex), int(ey)) / table.value(int(x[0]), int(x[1]))
    if rng.random() < min(1.0, r):
        return MarkCoupling(True, path, path.copy(), int(steps))
    # residual law of the conditioned path: density proportional to (1 - 1/r)+
    while True:
        cp, _, _, cx, cy = K.conditioned_until(
            int(x[0]), int(x[1]), _kernel_seed(rng), grid, R, kappa, 0, 0, -1,
            mask, box.x0, box.y0, _EMPTY, 0, 0, True, max_steps, True)
        rc = table.value(int(cx), int(cy)) / table.value(int(x[0]), int(x[1]))
        if rng.random() < max(0.0, 1.0 - 1.0 / rc):
            return MarkCoupling(False, path, cp, int(steps))


def mark_coupling_diag(entry, annulus: tuple[Disk, Disk], table: PotentialTable | None, rng,
                       method: str = "step") -> bool:
    return mark_coupling(entry, annulus, rng, table, method).success


# -- thresholds -------------------------------------------------------------

def pilot_sample(K_sites, alpha: float, count: int, rng, radius: float,
                 table: PotentialTable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(xi_K, D_K) pairs from the inner parts of sigma_K; D_K > radius shows as inf."""
    table = table or default_table()
    rng = as_generator(rng)
    ret = returns_for(K_sites, table)
    obs = Observation((0, 0), radius)
    xs, ds = np.empty(count, dtype=np.int64), np.empty(count)
    for r in range(count):
        xi = int(rng.poisson(math.pi * alpha * ret.cap))
        d = 0.0
        for _ in range(xi):
            x0 = ret.entry_sites[rng.choice(len(ret.entry_weights), p=ret.entry_weights)]
            d = max(d, sample_inner(x0, K_sites, obs, rng, table).inner_max_norm())
        xs[r], ds[r] = xi, d
    return xs, ds


@dataclass
class Thresholds:
    m0: int
    gamma0: float
    pilot_coverage: float
    holdout_coverage: float
    holdout_ci: tuple
    diagnostic: str = ""


def choose_thresholds(K_sites, alpha: float, epsilon: float, rng, *, pilot: int = 2000,
                      radius: float = 256.0, table: PotentialTable | None = None) -> Thresholds:
    """Thresholds with P[xi_K <= m0, D_K <= gamma0] >= 1 - epsilon / 2.

    Half of the pilot picks m0 and gamma0 as (1 - epsilon/4)-quantiles (the
    union bound then gives joint coverage); the other half validates.  If
    the held-out coverage falls short beyond its 99% Wilson interval the
    quantile level is raised.
    """
    from .stats import wilson_ci
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if pilot < 20:
        raise ValueError("pilot sample too small")
    xs, ds = pilot_sample(K_sites, alpha, pilot, rng, radius, table)
    h = pilot // 2
    target = 1 - epsilon / 2
    level = 1 - epsilon / 4
    diag = ""
    while True:
        m0 = int(np.quantile(xs[:h], level, method="higher"))
        g0 = float(np.quantile(ds[:h], level, method="higher"))
        cov_p = float(np.mean((xs[:h] <= m0) & (ds[:h] <= g0)))
        hits = int(np.sum((xs[h:] <= m0) & (ds[h:] <= g0)))
        ci = wilson_ci(hits, len(xs) - h)
        if ci[1] >= target or level >= 1:
            break
        level = min(1.0, level + epsilon / 8)
        diag = f"widened to quantile level {level:.4f}"
    if not math.isfinite(g0):
        diag = (diag + "; " if diag else "") + f"gamma0 exceeds the pilot radius {radius}"
    return Thresholds(m0, g0, cov_p, hits / (len(xs) - h), ci, diag)


# -- entrance laws to Theta_n ----------------------------------------------

class EntranceLaws:
    """Exact first-entrance laws to Theta_n = {|x| > n - 1} from near the origin.

    Walkers are the conditioned walk, optionally also conditioned never to
    visit a taboo set F after time 0 (F is the origin only, K U {0}, or
    B(L)).  The law from y is sum over first steps w not in F of
    H_F(w, z) a(z) P^_z[avoid F], normalised, where H_F is the SRW hitting
    law of the entrance layer killed on F.
    """

    def __init__(self, n: int, L: int, K_sites, table: PotentialTable):
        self.n, self.L, self.table = n, L, table
        self.D = ball_sites(Disk((0, 0), n - 1))
        self.Z = outer_boundary(self.D)
        self.K = as_sites(K_sites)
        self.ret_K = returns_for(self.K, table)
        self.ball_L = ball_sites(Disk((0, 0), L))
        self.ret_L = returns_for(self.ball_L, table)
        aZ = table(self.Z)
        avoid = {
            "origin": np.ones(len(self.Z)),
            "K": np.array([1 - self.ret_K.return_prob(z) for z in self.Z]),
            "L": np.array([1 - self.ret_L.return_prob(z) for z in self.Z]),
        }
        self.avoid = avoid
        self.weight = {k: aZ * v for k, v in avoid.items()}
        taboo = {"origin": np.zeros((1, 2), dtype=np.int64),
                 "K": as_sites(np.vstack([self.K, [[0, 0]]])),
                 "L": self.ball_L}
        self.taboo = taboo
        self.rows = {k: self._solve(t) for k, t in taboo.items()}

    def _solve(self, F):
        box = Box.around(np.vstack([self.D, self.Z]), margin=1)
        inD = box.mask(self.D)
        inF = box.mask(F)
        free = inD & ~inF
        zidx = np.full((box.nx, box.ny), -1, dtype=np.int64)
        zi = self.Z - [box.x0, box.y0]
        zidx[zi[:, 0], zi[:, 1]] = np.arange(len(self.Z))
        idx = np.full((box.nx, box.ny), -1, dtype=np.int64)
        N = int(free.sum())
        idx[free] = np.arange(N)
        I, J = np.nonzero(free)
        me = idx[I, J]
        rows, cols, vals = [me], [me], [np.ones(N)]
        br, bc = [], []
        for dx, dy in STEPS:
            nb = idx[I + dx, J + dy]
            ok = nb >= 0
            rows.append(me[ok])
            cols.append(nb[ok])
            vals.append(np.full(ok.sum(), -0.25))
            z = zidx[I + dx, J + dy]
            hit = z >= 0
            br.append(me[hit])
            bc.append(z[hit])
        A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
        Bm = sp.csc_matrix((np.full(sum(map(len, br)), 0.25),
                            (np.concatenate(br), np.concatenate(bc))), shape=(N, len(self.Z)))
        near = (I + box.x0) ** 2 + (J + box.y0) ** 2 <= (self.L + 2) ** 2
        lu = spla.splu(A)
        sol = np.empty((int(near.sum()), len(self.Z)))
        for s in range(0, len(self.Z), 64):
            sol[:, s:s + 64] = lu.solve(Bm[:, s:s + 64].toarray())[near]
        keys = list(zip((I[near] + box.x0).tolist(), (J[near] + box.y0).tolist()))
        return {k: sol[r] for r, k in enumerate(keys)}

    def law(self, kind: str, y) -> np.ndarray:
        rows = self.rows[kind]
        y = tuple(int(v) for v in y)
        v = np.zeros(len(self.Z))
        for dx, dy in STEPS.tolist():
            r = rows.get((y[0] + dx, y[1] + dy))
            if r is not None:
                v += r
        v *= self.weight[kind]
        tot = v.sum()
        if tot <= 0:
            raise ValueError(f"no admissible path from {y} for walker type {kind}")
        return v / tot


@lru_cache(maxsize=8)
def _entrance_cached(n, L, kbytes, table_id):
    K_sites = np.frombuffer(kbytes, dtype=np.int64).reshape(-1, 2)
    return EntranceLaws(n, L, K_sites, _TABLE_REF[table_id])


_TABLE_REF: dict[int, PotentialTable] = {}


def entrance_laws(n: int, L: int, K_sites, table: PotentialTable | None = None) -> EntranceLaws:
    table = table or default_table()
    _TABLE_REF[id(table)] = table
    return _entrance_cached(n, L, as_sites(K_sites).tobytes(), id(table))


# -- the pipeline -----------------------------------------------------------

@dataclass
class CouplingOutcome:
    success: bool
    stage: str
    diagnostics: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"success": self.success, "stage": self.stage, **self.diagnostics}


def layer_radius(n: int) -> int:
    """Index of the shell Lambda_{ln n}: ceil(ln n)."""
    return int(math.ceil(math.log(n)))


def _reuse_path(z, stream: RngStream, ret_L, obs: Observation, table):
    """Shared conditioned path from z; None if it ever comes back to B(L)."""
    rng = stream.generator()
    grid, R, kappa = _table_args(table)
    taboo = (ret_L.mask, ret_L.box.x0, ret_L.box.y0)
    sites, status = _walk(z[0], z[1], rng, grid, R, kappa, obs, taboo)
    if status == K.TABOO:
        return None
    if ret_L.decide(sites[-1], rng) is not None:
        return None
    return sites


def lemma2_pipeline(K_sites, alpha: float, epsilon: float, n: int, rng, *,
                    thresholds: tuple[int, float] | None = None,
                    N_predicate=None, table: PotentialTable | None = None,
                    observe_factor: float = 2.0, max_rejections: int = 10**4,
                    strict: bool = False) -> CouplingOutcome:
    """One replica of the staged coupling of two RI(alpha) copies I and J.

    Stages: (1) the inner part of sigma_K J, checked against (m0, gamma0)
    and D_K <= n - 1 (so the effective gamma0 is min(gamma0, n - 1); with
    ``strict`` a gamma0 above n - 1 is rejected instead); (2) maximal
    coupling of the numbers of trajectories meeting B(L), L = ceil(ln n);
    (3) pairwise maximal coupling of the first
    entrance points to Theta_n; (4) each pair follows one shared
    conditioned path from its entrance point, which must never come back
    to B(L).  On success the two configurations on Theta_n (observed up to
    radius observe_factor * n) are compared byte for byte.
    """
    table = table or default_table()
    Ks = as_sites(K_sites)
    if isinstance(rng, RngStream):
        stream = rng
    else:
        stream = RngStream(int(as_generator(rng).integers(0, 2**63 - 1)))
    g = stream.spawn(0).generator()
    if n < 3 or not np.all((Ks ** 2).sum(axis=1) <= math.log(n) ** 2):
        raise ValueError(f"need K inside B(ln n) = B({math.log(n):.3f})")
    if thresholds is None:
        th = choose_thresholds(Ks, alpha, epsilon, g, pilot=400, radius=n - 1, table=table)
        m0, gamma0 = th.m0, th.gamma0
    else:
        m0, gamma0 = thresholds
    if strict and gamma0 > n - 1:
        raise ValueError(f"gamma0={gamma0} exceeds n - 1 = {n - 1}")
    g_eff = min(gamma0, n - 1)
    L = layer_radius(n)
    diag = {"n": n, "L": L, "m0": m0, "gamma0": gamma0 if math.isfinite(gamma0) else -1.0,
            "gamma0_eff": g_eff}

    # stage 1: inner part of sigma_K J
    ret_K = returns_for(Ks, table)
    obs1 = Observation((0, 0), n - 1)
    for _ in range(max_rejections):
        xi = int(g.poisson(math.pi * alpha * ret_K.cap)) if ret_K.cap > 0 else 0
        inner = []
        for _ in range(xi):
            x0 = ret_K.entry_sites[g.choice(len(ret_K.entry_weights), p=ret_K.entry_weights)]
            inner.append(sample_inner(x0, Ks, obs1, g, table))
        if N_predicate is None or N_predicate(noodle_config(inner, Ks)):
            break
    else:
        raise RuntimeError("conditioning event N too rare for rejection sampling")
    D = max((t.inner_max_norm() for t in inner), default=0.0)
    diag.update(xi_K=xi, D_K=D if math.isfinite(D) else -1.0)
    if xi > m0 or D > g_eff:
        return CouplingOutcome(False, "inner_event", diag)

    # stage 2: counts of trajectories meeting B(L)
    ret_L = returns_for(ball_sites(Disk((0, 0), L)), table)
    lam_I = math.pi * alpha * ret_L.cap
    lam_J = math.pi * alpha * (ret_L.cap - ret_K.cap)
    NI, NJ, ok = count_coupling(lam_I, lam_J, xi, g)
    diag.update(p_count=1 - shifted_poisson_tv(lam_I, lam_J, xi), Y=NI)
    if not ok:
        diag.update(NJ=NJ)
        return CouplingOutcome(False, "count_coupling", diag)
    Y = NI

    # stage 3: entrance points to Theta_n
    E = entrance_laws(n, L, Ks, table)
    hm_L = (ret_L.entry_sites, ret_L.entry_weights)
    avoidK = np.array([0.0 if ret_K.kernel.contains(y[None])[0] else 1 - ret_K.return_prob(y)
                       for y in hm_L[0]])
    wJ = hm_L[1] * avoidK
    wJ = wJ / wJ.sum()
    yI = hm_L[0][g.choice(len(hm_L[1]), size=Y, p=hm_L[1])] if Y else np.empty((0, 2), int)
    yJ = hm_L[0][g.choice(len(wJ), size=Y - xi, p=wJ)] if Y > xi else np.empty((0, 2), int)
    plus = [_site_at(t, t.tau_plus) for t in inner]
    minus = [t.pieces[0].sites[0] for t in inner]
    I_walkers = [("origin", y) for y in yI] + [("L", y) for y in yI]
    J_walkers = ([("K", y) for y in plus] + [("K", y) for y in yJ]
                 + [("K", y) for y in minus] + [("L", y) for y in yJ])
    p_entry = 1.0
    entries = []
    for (ka, ya), (kb, yb) in zip(I_walkers, J_walkers):
        la, lb = E.law(ka, ya), E.law(kb, yb)
        p_entry *= 1 - 0.5 * np.abs(la - lb).sum()
        i, j, same = maximal_coupling(la, lb, g.random())
        entries.append((same, E.Z[i], E.Z[j]))
    diag.update(p_entry=p_entry)
    if not all(s for s, _, _ in entries):
        return CouplingOutcome(False, "entry_coupling", diag)

    # stage 4: shared continuation from each common entrance point
    obs4 = Observation((0, 0), observe_factor * n)
    p_reuse = 1.0
    paths_I, paths_J = [], []
    ok = True
    for k, (_, z, _) in enumerate(entries):
        p_reuse *= 1 - E.ret_L.return_prob(z)
        pair = stream.spawn(1, k)
        a = _reuse_path(tuple(z.tolist()), pair, E.ret_L, obs4, table)
        if a is None:
            ok = False
            continue
        b = _reuse_path(tuple(z.tolist()), pair, E.ret_L, obs4, table)
        paths_I.append(PathSegment(a))
        paths_J.append(PathSegment(b))
    diag.update(p_reuse=p_reuse)
    if not ok:
        return CouplingOutcome(False, "trajectory_reuse", diag)
    theta = lambda p: (p ** 2).sum(axis=1) > (n - 1) ** 2  # noqa: E731
    cI = noodle_config(paths_I, None, predicate=theta)
    cJ = noodle_config(paths_J, None, predicate=theta)
    diag.update(identical=cI.canonical_bytes() == cJ.canonical_bytes())
    return CouplingOutcome(True, "trajectory_reuse", diag)


def _site_at(traj, clock):
    for p in traj.pieces:
        if p.clock <= clock < p.clock + len(p):
            return p.sites[clock - p.clock]
    raise IndexError(clock)
