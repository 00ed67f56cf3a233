import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import A_EXACT, KAPPA, a_diagonal
from ri2d.lattice import Disk, ball_sites, inner_boundary, site_set
from ri2d.potential import (HittingKernel, capacity, conditional_harmonic_measure,
                            conditioned_harmonic_measure, harmonic_measure, potential_kernel)


def test_exact_values(table):
    assert table.value(0, 0) == 0
    assert abs(table.value(1, 0) - 1) < 1e-6
    assert abs(table.value(1, 1) - 4 / math.pi) < 1e-4
    for (x, y), v in A_EXACT.items():
        assert abs(table.value(x, y) - v) < 1e-9
    for n in (3, 10, 40, 120):
        assert abs(table.value(n, n) - a_diagonal(n)) < 1e-9
    assert abs(table.kappa - KAPPA) < 1e-9


def test_harmonicity(table):
    assert table.harmonicity_residual(50) < 1e-9


def test_asymptotic_continuation(table):
    # rings: a - (2/pi) ln|x| settles down
    devs = [abs(table.value(r, 0) - 2 / math.pi * math.log(r) - table.kappa) for r in (5, 20, 80, 190)]
    assert all(b < a for a, b in zip(devs, devs[1:]))
    # beyond the table the expansion takes over seamlessly
    assert abs(table.value(300, 0) - (2 / math.pi * math.log(300) + table.kappa
                                      - 1 / (6 * math.pi * 300 ** 2))) < 1e-12


def test_small_table_agrees(table):
    small = potential_kernel(40, use_cache=False)
    pts = ball_sites(Disk((0, 0), 30))
    assert np.max(np.abs(small(pts) - table(pts))) < 1e-6


def test_harmonic_measure_symmetric_cases():
    hm = harmonic_measure(ball_sites(Disk((0, 0), 1)))
    assert np.allclose(hm.weights, 0.25, atol=1e-12)
    hm2 = harmonic_measure([(0, 0), (1, 0)])
    assert np.allclose(hm2.weights, 0.5, atol=1e-12)
    c = conditional_harmonic_measure(ball_sites(Disk((0, 0), 1)), ball_sites(Disk((0, 0), 3)))
    assert np.allclose(c.weights, 0.25, atol=1e-12)


def test_conditional_normalised_and_close():
    A = ball_sites(Disk((0, 0), 8))
    c = conditional_harmonic_measure(A, ball_sites(Disk((0, 0), math.ceil(8 * math.e))))
    assert abs(c.weights.sum() - 1) < 1e-12
    assert site_set(c.support) == site_set(inner_boundary(A))
    devs = []
    for n in (8, 16, 32):
        B = ball_sites(Disk((0, 0), n))
        a, b = harmonic_measure(B), conditional_harmonic_measure(B, ball_sites(Disk((0, 0), math.e * n)))
        devs.append(np.max(np.abs(b.on(a.support) / a.weights - 1)))
    assert devs[0] > devs[1] > devs[2]


def test_container_resolution():
    A = ball_sites(Disk((0, 0), 8))
    exact = harmonic_measure(A)
    g100 = exact.tv(harmonic_measure(A, method="container", R_far=100))
    g200 = exact.tv(harmonic_measure(A, method="container", R_far=200))
    assert g200 <= 2 * g100 * (100 / 200)


def test_capacity_values(table):
    assert capacity([(0, 0)]) == 0
    assert abs(capacity([(0, 0), (1, 0)]) - 0.5) < 1e-9
    # two-point sets: cap({0, x}) = a(x) / 2
    for x in [(3, 4), (10, 0), (7, 7)]:
        assert abs(capacity([(0, 0), x]) - table.value(*x) / 2) < 1e-9
    with pytest.raises(ValueError):
        capacity([(1, 0)])


def test_capacity_of_far_disk_band():
    from ri2d.stats import target_capacity
    r = [target_capacity(s) * math.pi / (2 * math.log(s)) for s in (200, 400)]
    assert all(0.7 <= v <= 1.3 for v in r)


_small_sets = st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=8)


@settings(max_examples=30, deadline=None)
@given(_small_sets, _small_sets)
def test_capacity_monotone(a, b):
    A = site_set(a) | {(0, 0)}
    B = A | site_set(b)
    assert capacity(sorted(A)) <= capacity(sorted(B)) + 1e-9


@settings(max_examples=30, deadline=None)
@given(_small_sets)
def test_measures_are_probabilities(a):
    pts = sorted(site_set(a) | {(0, 0), (1, 0)})
    for hm in (harmonic_measure(pts), conditioned_harmonic_measure([p for p in pts if p != (0, 0)])):
        assert np.all(hm.weights >= 0)
        assert abs(hm.weights.sum() - 1) < 1e-12
        assert site_set(hm.support) <= site_set(pts)


@settings(max_examples=20, deadline=None)
@given(_small_sets, st.tuples(st.integers(-20, 20), st.integers(-20, 20)))
def test_hitting_law_is_probability(a, x):
    K = HittingKernel(sorted(site_set(a) | {(0, 0)}))
    h = K.hitting(x)
    assert np.all(h >= -1e-12) and abs(h.sum() - 1) < 1e-9
