import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import psi_direct, t_direct
from ri2d import _kernels as K
from ri2d.excursions import (_torus_labels, coverage_report, disk_packing, psi,
                             sample_iid_excursions, t_threshold, torus_excursion_experiment,
                             torus_return_kernel, torus_side)
from ri2d.lattice import Disk, ball_sites, inner_boundary, site_set
from ri2d.potential import conditional_harmonic_measure, harmonic_measure
from ri2d.stats import chi_square, wilson_ci
from ri2d.walks import PathSegment


def test_psi_values():
    assert abs(psi(math.exp(10), 1, math.e) - (200 - 20 * math.log(10))) < 1e-9
    assert abs(psi(math.exp(10), 1, math.e) - 153.948) < 1e-3
    vals = [psi(math.exp(k), 1, math.e) for k in range(3, 21)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        psi(2, 1, math.e)


@settings(max_examples=60, deadline=None)
@given(st.floats(3, 1e6), st.floats(0.01, 5), st.floats(1.1, 10))
def test_psi_identity(n, beta, gamma):
    ln = math.log(n)
    lhs = psi(n, beta, gamma) + (1 + beta) * ln * math.log(ln) / math.log(gamma)
    assert math.isclose(lhs, 2 * ln * ln / math.log(gamma), rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(psi(n, beta, gamma), psi_direct(n, beta, gamma), rel_tol=1e-12, abs_tol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 10**5), st.floats(0.01, 5), st.floats(0.01, 5))
def test_t_identities(m, b1, b2):
    ln = math.log(m)
    lhs = t_threshold(m, b1) * math.pi / m ** 2 + (1 + b1) * 2 * ln * math.log(ln)
    assert math.isclose(lhs, 4 * ln * ln, rel_tol=1e-9, abs_tol=1e-9)
    if b1 > b2:
        assert t_threshold(m, b1) < t_threshold(m, b2)


def test_t_threshold_value():
    assert math.isclose(t_threshold(261, 1 / 3), t_direct(261, 1 / 3), rel_tol=1e-14)


def test_iid_excursions_entry_law():
    n = 16
    hm = harmonic_measure(ball_sites(Disk((0, 0), n)))
    g = np.random.default_rng(1)
    assert sample_iid_excursions(n, math.e, 0, hm, g) == []
    ex = sample_iid_excursions(n, math.e, 10_000, hm, g)
    outer = site_set(inner_boundary(ball_sites(Disk((0, 0), math.e * n))))
    assert all(e.exit in outer for e in ex[:200])
    idx = {p: i for i, p in enumerate(map(tuple, hm.support.tolist()))}
    counts = np.bincount([idx[e.entry] for e in ex], minlength=len(idx))
    assert chi_square(counts, hm.weights) > 0.01


def test_coverage_report():
    d = Disk((0, 0), 4)
    assert not coverage_report(d, []).complete
    sweep = [np.array([[x, y] for x in range(-4, 5) for y in range(-4, 5)])]
    assert coverage_report(d, sweep).complete
    g = np.random.default_rng(2)
    hm = harmonic_measure(ball_sites(Disk((0, 0), 8)))
    ex = sample_iid_excursions(8, math.e, 20, hm, g)
    sizes = [coverage_report(Disk((0, 0), 8), ex[:k]).uncovered_count for k in range(21)]
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_noncoverage_monotone_in_count():
    n, reps, grid = 8, 200, (2, 5, 10, 20)
    hm = harmonic_measure(ball_sites(Disk((0, 0), n)))
    g = np.random.default_rng(3)
    miss = np.zeros(len(grid))
    for _ in range(reps):
        ex = sample_iid_excursions(n, math.e, grid[-1], hm, g)
        miss += [not coverage_report(Disk((0, 0), n), ex[:k]).complete for k in grid]
    assert all(b <= a for a, b in zip(miss, miss[1:]))


def test_torus_run_contract():
    run = torus_excursion_experiment(8, math.e, 1.0, np.random.default_rng(4))
    assert run.count >= 0 and run.m == torus_side(8, math.e) == 65
    assert site_set(run.coverage.visited) <= site_set(ball_sites(Disk((0, 0), 8)))
    assert site_set(run.entries) <= site_set(inner_boundary(ball_sites(Disk((0, 0), 8))))
    with pytest.raises(ValueError):
        torus_excursion_experiment(4, math.e, 1.0, np.random.default_rng(0))


def test_torus_entry_law_is_conditional_hm():
    n, gamma = 16, math.e
    torus, emb, label, in_target = _torus_labels(n, gamma)
    m = torus.m
    count, _, entries = K.torus_excursion_scan(m, 0, 0, 2 * 10**8, 5, label, in_target)
    assert count >= 10_000
    pts = entries - emb.offset
    ref = conditional_harmonic_measure(ball_sites(Disk((0, 0), n)),
                                       ball_sites(Disk((0, 0), gamma * n)))
    idx = {p: i for i, p in enumerate(map(tuple, ref.support.tolist()))}
    counts = np.bincount([idx[tuple(p)] for p in pts.tolist()], minlength=len(idx))
    assert chi_square(counts, ref.weights) > 0.01


def test_torus_return_kernel_rows():
    k = torus_return_kernel(16, math.e)
    assert np.allclose(k.matrix.sum(axis=1), 1, atol=1e-12)
    assert np.all(k.matrix >= 0)
    ref = conditional_harmonic_measure(ball_sites(Disk((0, 0), 16)),
                                       ball_sites(Disk((0, 0), math.e * 16)))
    assert np.allclose(ref.on(k.inner), k.stationary, atol=1e-14)
    np.testing.assert_array_equal(k.row(tuple(k.outer[3])), k.matrix[3])


def test_count_below_psi_half_beta_at_64():
    # P[count <= psi_{n, beta/2}] >= 1/2 at n = 64, beta = 1
    n, beta, reps = 64, 1.0, 20
    lim = psi(n, beta / 2, math.e)
    below = sum(torus_excursion_experiment(n, math.e, beta, np.random.default_rng(100 + r)).count
                <= lim for r in range(reps))
    assert wilson_ci(below, reps)[1] >= 0.5


def test_packing():
    lay = disk_packing(1, 3, math.e)  # h^{-1} n < 1 and nothing but the centre fits
    assert lay.centers.tolist() == [[0, 0]]
    # h^{-1} n < 1 alone does not force a degenerate layout: four disks of
    # radius 1.36 fit in B(5); the inner disks B_j are single sites
    lay = disk_packing(5, 10, math.e)
    assert lay.kappa == 4 and 5 / 10 < 1
    for h in (10, 20, 40):
        lay = disk_packing(10**4, h, math.e)
        assert 0.05 <= lay.kappa / h ** 2 <= 0.8
    lay = disk_packing(200, 10, math.e)
    sets = [site_set(ball_sites(Disk(tuple(c), lay.radius))) for c in lay.centers.tolist()]
    big = site_set(ball_sites(Disk((0, 0), 200)))
    seen: set = set()
    for s in sets:
        assert s <= big
        assert not (s & seen)
        seen |= s
    with pytest.raises(ValueError):
        disk_packing(100, 2, math.e)
