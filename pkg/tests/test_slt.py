import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ri2d.lattice import Disk, ball_sites
from ri2d.potential import harmonic_measure
from ri2d.slt import (PointPool, SoftField, consumed_subset, dominance_check, iid_field,
                      slt_generate, torus_dominance)
from ri2d.stats import chi_square
from ri2d.walks import RngStream


@pytest.fixture(scope="module")
def hm16():
    return harmonic_measure(ball_sites(Disk((0, 0), 16)))


def test_zero_steps(hm16):
    pool = PointPool(hm16.support, RngStream(1))
    entries, fld = slt_generate(pool, [hm16.weights], 0)
    assert len(entries) == 0 and fld.k == 0
    assert np.all(fld.values == 0)


def test_pool_heights_do_not_depend_on_access_order(hm16):
    a = PointPool(hm16.support, RngStream(2))
    b = PointPool(hm16.support, RngStream(2))
    h1 = [a.height(3, j) for j in range(40)]
    b.height(7, 100)
    h2 = [b.height(3, j) for j in reversed(range(40))][::-1]
    assert h1 == h2
    assert all(y > x for x, y in zip(h1, h1[1:]))


def test_proportional_cone(hm16):
    pool = PointPool(hm16.support, RngStream(3))
    _, fld = slt_generate(pool, [hm16.weights] * 50, 50)
    c = sum(fld.raises)
    assert np.array_equal(fld.values, c * hm16.weights)
    iid = type("F", (), {"values": c * hm16.weights, "support": hm16.support})()
    assert dominance_check(fld, iid) and dominance_check(iid, fld)
    # the field sits at the chosen points' heights
    for (i, j) in fld.entries[-5:]:
        assert pool.height(i, j) <= fld.values[i] * (1 + 1e-12)


def test_entry_marginal_matches_density(hm16):
    pool = PointPool(hm16.support, RngStream(4))
    k = 10_000
    _, fld = slt_generate(pool, [hm16.weights] * k, k)
    counts = np.bincount([i for i, _ in fld.entries], minlength=len(hm16.support))
    assert chi_square(counts, hm16.weights) > 0.01


def test_first_and_fifth_entries_follow_their_densities(hm16):
    n = len(hm16.support)
    tilt = np.arange(1, n + 1, dtype=float) ** 2
    tilt /= tilt.sum()
    dens = [hm16.weights, tilt, hm16.weights, tilt, tilt]
    first, fifth = np.zeros(n), np.zeros(n)
    for r in range(4000):
        _, fld = slt_generate(PointPool(hm16.support, RngStream(5, (r,))), dens, 5)
        first[fld.entries[0][0]] += 1
        fifth[fld.entries[4][0]] += 1
    assert chi_square(first, hm16.weights) > 0.01
    assert chi_square(fifth, tilt) > 0.01


def test_callable_density_and_validation(hm16):
    pool = PointPool(hm16.support, RngStream(6))
    seen = []

    def dens(k, fld):
        seen.append((k, fld.k))
        return hm16.weights
    slt_generate(pool, dens, 3)
    assert seen == [(1, 0), (2, 1), (3, 2)]
    bad = hm16.weights.copy()
    bad[0] = 0
    bad /= bad.sum()
    with pytest.raises(ValueError):
        slt_generate(pool, [bad], 1)
    with pytest.raises(ValueError):
        slt_generate(pool, [hm16.weights * 2], 1)


def test_iid_field(hm16):
    g = np.random.default_rng(7)
    assert np.all(iid_field(0, hm16, g).values == 0)
    sums = np.array([iid_field(100, hm16, g).xi_sum for _ in range(10_000)])
    assert abs(sums.mean() - 100) < 3 * 10 / math.sqrt(len(sums))
    f = iid_field(10, hm16, g)
    assert np.allclose(f.values / hm16.weights, f.xi_sum, rtol=1e-14)


def test_dominance_check_cases(hm16):
    pool = PointPool(hm16.support, RngStream(8))
    _, fld = slt_generate(pool, [hm16.weights] * 5, 5)
    assert dominance_check(fld, fld)
    assert dominance_check(SoftField.zero(hm16.support), fld)
    other = SoftField.zero(hm16.support[:-1])
    with pytest.raises(ValueError):
        dominance_check(other, fld)


def _density(seed, n):
    w = np.random.default_rng(seed).random(n) + 0.05
    return w / w.sum()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 15), st.integers(1, 15), st.integers(0, 10**6))
def test_dominance_implies_containment(seed, ka, kb, pool_seed):
    sites = ball_sites(Disk((0, 0), 3))
    n = len(sites)
    da = [_density(seed + i, n) for i in range(ka)]
    db = [_density(seed + 1000 + i, n) for i in range(kb)]
    pool = PointPool(sites, RngStream(pool_seed))
    _, fa = slt_generate(pool, da, ka)
    _, fb = slt_generate(pool, db, kb)
    # consumed points are exactly the points under the field
    assert np.array_equal(fa.points_below(fa.values * (1 + 1e-12), pool), fa.consumed)
    if dominance_check(fa, fb):
        assert consumed_subset(fa, fb)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 20))
def test_field_monotone(seed, k):
    sites = ball_sites(Disk((0, 0), 2))
    pool = PointPool(sites, RngStream(seed))
    fld = None
    prev = np.zeros(len(sites))
    for i in range(k):
        _, fld = slt_generate(pool, lambda j, f: _density(seed + j, len(sites)), 1, fld)
        assert np.all(fld.values >= prev - 1e-12)
        prev = fld.values
    assert np.allclose(fld.at(k), fld.values)
    assert np.all(fld.at(k - 0.5) <= fld.values + 1e-12)


def test_torus_dominance_containment():
    runs = [torus_dominance(16, math.e, 1.0, RngStream(9, (r,))) for r in range(100)]
    assert all(r.contained for r in runs)
    assert any(r.dominated for r in runs)
