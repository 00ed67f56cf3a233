"""Reference values computed without the package under test."""

from __future__ import annotations

import math

import mpmath
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Classical exact values of the lattice potential kernel.
A_EXACT = {
    (0, 0): 0.0,
    (1, 0): 1.0,
    (1, 1): 4 / math.pi,
    (2, 0): 4 - 8 / math.pi,
    (2, 1): 8 / math.pi - 1,
    (2, 2): 16 / (3 * math.pi),
}


def a_diagonal(n: int) -> float:
    """a(n, n) = (4/pi) (1 + 1/3 + ... + 1/(2n - 1))."""
    return 4 / math.pi * sum(1 / (2 * k - 1) for k in range(1, n + 1))


KAPPA = (2 * 0.5772156649015329 + math.log(8)) / math.pi


def poisson_tv_mp(l1: float, l2: float, dps: int = 40) -> float:
    """Half the l1 distance between two Poisson laws, summed at high precision."""
    with mpmath.workdps(dps):
        a, b = mpmath.mpf(l1), mpmath.mpf(l2)
        top = int(max(l1, l2) + 40 * math.sqrt(max(l1, l2)) + 60)
        pa, pb = mpmath.exp(-a), mpmath.exp(-b)
        s = abs(pa - pb)
        for k in range(1, top):
            pa *= a / k
            pb *= b / k
            s += abs(pa - pb)
        return float(s / 2)


def poisson_shift_tv_mp(lam: float, dps: int = 40) -> float:
    """TV(Poisson(lam), 1 + Poisson(lam)) = E|X/lam - 1| / 2."""
    with mpmath.workdps(dps):
        l = mpmath.mpf(lam)
        top = int(lam + 40 * math.sqrt(lam) + 60)
        p = mpmath.exp(-l)
        s = p  # k = 0 term: |0/lam - 1| = 1
        for k in range(1, top):
            p *= l / k
            s += p * abs(k / l - 1)
        return float(s / 2)


def ball_count(r: float) -> int:
    k = int(math.floor(r))
    return sum(1 for x in range(-k, k + 1) for y in range(-k, k + 1) if x * x + y * y <= r * r)


def boundary_count(r: float) -> int:
    inside = {(x, y) for x in range(-int(r) - 1, int(r) + 2)
              for y in range(-int(r) - 1, int(r) + 2) if x * x + y * y <= r * r}
    return sum(1 for (x, y) in inside
               if any((x + dx, y + dy) not in inside
                      for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))))


def mean_exit_time(n: int) -> float:
    """E_0[exit time of B(n)] from the linear system E = 1 + mean of neighbours."""
    pts = [(x, y) for x in range(-n, n + 1) for y in range(-n, n + 1) if x * x + y * y <= n * n]
    idx = {p: i for i, p in enumerate(pts)}
    rows, cols, vals = [], [], []
    for p, i in idx.items():
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = idx.get((p[0] + dx, p[1] + dy))
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(-0.25)
    M = sp.csc_matrix((vals, (rows, cols)), shape=(len(pts), len(pts)))
    return float(spla.spsolve(M, np.ones(len(pts)))[idx[(0, 0)]])


def psi_direct(n, beta, gamma):
    ln = math.log(n)
    return 2 * ln ** 2 / math.log(gamma) - (1 + beta) * ln * math.log(ln) / math.log(gamma)


def t_direct(m, beta):
    ln = math.log(m)
    return 4 / math.pi * m * m * ln * ln - (1 + beta) * 2 / math.pi * m * m * ln * math.log(ln)


def conditioned_hit_before_exit(x, target, R: int, a) -> float:
    """P^_x[hit target before leaving B(0, R)] for the walk conditioned by ``a``.

    Doob transform: equals E_x[a(X_T); X_T in target] / a(x) for the SRW
    stopped at T, the first time it is in target, at 0, or outside B(0, R).
    """
    tgt = {tuple(p) for p in np.asarray(target).tolist()}
    pts = [(i, j) for i in range(-R, R + 1) for j in range(-R, R + 1)
           if i * i + j * j <= R * R and (i, j) not in tgt and (i, j) != (0, 0)]
    idx = {p: k for k, p in enumerate(pts)}
    rows, cols, vals = [], [], []
    rhs = np.zeros(len(pts))
    for p, k in idx.items():
        rows.append(k)
        cols.append(k)
        vals.append(1.0)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (p[0] + dx, p[1] + dy)
            j = idx.get(q)
            if j is not None:
                rows.append(k)
                cols.append(j)
                vals.append(-0.25)
            elif q in tgt:
                rhs[k] += 0.25 * a(q)
    M = sp.csc_matrix((vals, (rows, cols)), shape=(len(pts), len(pts)))
    f = spla.splu(M).solve(rhs)
    return float(f[idx[tuple(x)]] / a(tuple(x)))
