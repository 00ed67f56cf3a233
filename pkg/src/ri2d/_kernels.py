"""Compiled inner loops for the walk samplers.

Every kernel reseeds numba's generator from an integer drawn from the
caller's numpy Generator, so a path is a deterministic function of the
caller's stream.  Steps are encoded 0..3 as +x, -x, +y, -y.
"""

import math

import numpy as np
from numba import njit

DX = np.array([1, -1, 0, 0], dtype=np.int64)
DY = np.array([0, 0, 1, -1], dtype=np.int64)

# walk status codes
STOPPED = 0
TRUNCATED = 2
EXITED = 3
TABOO = 4


@njit(cache=True)
def _grow(buf, n):
    new = np.empty((buf.shape[0] * 2, 2), dtype=np.int64)
    new[:n] = buf[:n]
    return new


@njit(cache=True)
def srw_until(x, y, seed, stop, x0, y0, max_steps, record):
    """SRW from (x, y) until it stands on a site with ``stop`` set.

    ``stop`` is a boolean raster with lower-left corner (x0, y0); sites off
    the raster never stop the walk.
    """
    np.random.seed(seed)
    nx, ny = stop.shape
    buf = np.empty((1024 if record else 1, 2), dtype=np.int64)
    n = 0
    steps = 0
    while True:
        if record:
            if n == buf.shape[0]:
                buf = _grow(buf, n)
            buf[n, 0] = x
            buf[n, 1] = y
            n += 1
        i, j = x - x0, y - y0
        if i >= 0 and j >= 0 and i < nx and j < ny and stop[i, j]:
            return buf[:n], STOPPED, steps, x, y
        if steps >= max_steps:
            return buf[:n], TRUNCATED, steps, x, y
        k = np.random.randint(0, 4)
        x += DX[k]
        y += DY[k]
        steps += 1


@njit(cache=True)
def torus_path(m, x, y, t, seed):
    np.random.seed(seed)
    out = np.empty((t + 1, 2), dtype=np.int64)
    out[0, 0] = x
    out[0, 1] = y
    for s in range(t):
        k = np.random.randint(0, 4)
        x = (x + DX[k]) % m
        y = (y + DY[k]) % m
        out[s + 1, 0] = x
        out[s + 1, 1] = y
    return out


@njit(cache=True)
def torus_excursion_scan(m, x, y, t, seed, label, in_target):
    """Run t torus steps; count completed excursions and mark coverage.

    ``label`` is 1 on the inner boundary of the small disk, 2 on the inner
    boundary of the large disk, 0 elsewhere.  Excursions start at a visit to
    label 1 and end at the next visit to label 2.  ``in_target`` marks the
    small disk; visited target sites are returned.  The random draws match
    ``torus_path`` for the same seed.
    """
    np.random.seed(seed)
    visited = np.zeros((m, m), dtype=np.bool_)
    entries = np.empty((256, 2), dtype=np.int64)
    count = 0
    inside = False
    cur_entry_x = 0
    cur_entry_y = 0
    for s in range(t + 1):
        if in_target[x, y]:
            visited[x, y] = True
        lab = label[x, y]
        if not inside and lab == 1:
            inside = True
            cur_entry_x = x
            cur_entry_y = y
        elif inside and lab == 2:
            inside = False
            if count == entries.shape[0]:
                entries = _grow(entries, count)
            entries[count, 0] = cur_entry_x
            entries[count, 1] = cur_entry_y
            count += 1
        if s == t:
            break
        k = np.random.randint(0, 4)
        x = (x + DX[k]) % m
        y = (y + DY[k]) % m
    return count, visited, entries[:count]


@njit(cache=True)
def a_value(x, y, grid, R, kappa):
    r2 = x * x + y * y
    if r2 <= R * R:
        return grid[x + R, y + R]
    fx = float(x)
    fy = float(y)
    r2f = fx * fx + fy * fy
    c4 = (fx ** 4 - 6.0 * fx * fx * fy * fy + fy ** 4) / (r2f * r2f)
    return math.log(r2f) / math.pi + kappa - c4 / (6.0 * math.pi * r2f)


@njit(cache=True)
def conditioned_until(x, y, seed, grid, R, kappa, cx, cy, obs_r2,
                      target, tx0, ty0, taboo, fx0, fy0,
                      stop_on_target, max_steps, record):
    """Conditioned walk (Doob transform by a) from (x, y).

    Stops on leaving the observation disk |z - (cx, cy)|^2 <= obs_r2
    (EXITED, the outside site is the last one recorded), on standing on a
    ``target`` site after time 0 when ``stop_on_target`` (STOPPED), on
    standing on a ``taboo`` site after time 0 (TABOO), or after
    ``max_steps`` steps (TRUNCATED).  ``obs_r2 < 0`` disables the disk.
    """
    if seed >= 0:
        np.random.seed(seed)
    tnx, tny = target.shape
    fnx, fny = taboo.shape
    buf = np.empty((1024 if record else 1, 2), dtype=np.int64)
    n = 0
    steps = 0
    w = np.empty(4)
    while True:
        if record:
            if n == buf.shape[0]:
                buf = _grow(buf, n)
            buf[n, 0] = x
            buf[n, 1] = y
            n += 1
        if obs_r2 >= 0:
            ddx = x - cx
            ddy = y - cy
            if ddx * ddx + ddy * ddy > obs_r2:
                return buf[:n], EXITED, steps, x, y
        if steps > 0:
            i, j = x - fx0, y - fy0
            if i >= 0 and j >= 0 and i < fnx and j < fny and taboo[i, j]:
                return buf[:n], TABOO, steps, x, y
            if stop_on_target:
                i, j = x - tx0, y - ty0
                if i >= 0 and j >= 0 and i < tnx and j < tny and target[i, j]:
                    return buf[:n], STOPPED, steps, x, y
        if steps >= max_steps:
            return buf[:n], TRUNCATED, steps, x, y
        tot = 0.0
        for k in range(4):
            w[k] = a_value(x + DX[k], y + DY[k], grid, R, kappa)
            tot += w[k]
        u = np.random.random() * tot
        k = 0
        acc = w[0]
        while u >= acc and k < 3:
            k += 1
            acc += w[k]
        x += DX[k]
        y += DY[k]
        steps += 1


@njit(cache=True)
def coupled_steps(x, y, seed, grid, R, kappa, stop, x0, y0, max_steps):
    """Step-wise maximal coupling of an SRW step and a conditioned step.

    Both walkers start at (x, y); at every step they move together with
    probability sum_k min(1/4, p^_k), otherwise they split and the coupling
    fails.  Returns (success, steps, common path).  Stops when the common
    walker stands on a ``stop`` site.
    """
    np.random.seed(seed)
    nx, ny = stop.shape
    w = np.empty(4)
    buf = np.empty((1024, 2), dtype=np.int64)
    n = 0
    steps = 0
    while True:
        if n == buf.shape[0]:
            buf = _grow(buf, n)
        buf[n, 0] = x
        buf[n, 1] = y
        n += 1
        i, j = x - x0, y - y0
        if i >= 0 and j >= 0 and i < nx and j < ny and stop[i, j]:
            return True, steps, buf[:n]
        if steps >= max_steps:
            return False, steps, buf[:n]
        tot = 0.0
        for k in range(4):
            w[k] = a_value(x + DX[k], y + DY[k], grid, R, kappa)
            tot += w[k]
        overlap = 0.0
        for k in range(4):
            overlap += min(0.25, w[k] / tot)
        u = np.random.random()
        if u >= overlap:
            return False, steps, buf[:n]
        v = np.random.random() * overlap
        k = 0
        acc = min(0.25, w[0] / tot)
        while v >= acc and k < 3:
            k += 1
            acc += min(0.25, w[k] / tot)
        x += DX[k]
        y += DY[k]
        steps += 1
