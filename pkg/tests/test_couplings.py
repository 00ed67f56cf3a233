import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ri2d.lattice import ball_sites, disk
from ri2d.couplings import (STAGES, choose_thresholds, count_coupling, lemma2_pipeline,
                            mark_coupling, maximal_coupling, poisson_shift_tv, poisson_tv,
                            shifted_poisson_tv, tv_bound)
from ri2d.stats import wilson_ci
from oracles import poisson_shift_tv_mp, poisson_tv_mp

LAMS = [1.0, 10.0, 100.0, 1000.0]
HS = [0.1, 0.5, 1.0]


@pytest.mark.parametrize("lam", LAMS)
@pytest.mark.parametrize("hf", HS)
def test_poisson_tv_exact_and_bounded(lam, hf):
    h = hf * math.sqrt(lam)
    d = poisson_tv(lam, lam + h)
    assert abs(d - poisson_tv_mp(lam, lam + h)) < 1e-12
    assert d <= tv_bound(lam, h) + 1e-15
    assert d == pytest.approx(poisson_tv(lam + h, lam), abs=1e-15)


@pytest.mark.parametrize("lam", LAMS + [0.3, 37.5])
def test_shift_tv_exact(lam):
    d = poisson_shift_tv(lam)
    assert abs(d - poisson_shift_tv_mp(lam)) < 1e-12
    assert math.sqrt(lam) * d <= 0.5


def test_tv_small_cases():
    assert poisson_tv(5, 5) == 0.0
    assert poisson_shift_tv(100) <= 0.05
    assert shifted_poisson_tv(7.0, 7.0, 0) == pytest.approx(0.0, abs=1e-15)
    assert shifted_poisson_tv(7.0, 7.0, 1) == pytest.approx(poisson_shift_tv(7.0), abs=1e-12)
    with pytest.raises(ValueError):
        poisson_tv(-1.0, 2.0)
    with pytest.raises(ValueError):
        shifted_poisson_tv(1.0, 1.0, -1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 300), st.floats(0.05, 300))
def test_tv_symmetric_in_unit_interval(a, b):
    d = poisson_tv(a, b)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(poisson_tv(b, a), abs=1e-13)


def test_count_coupling_equal_laws_always_agree():
    rng = np.random.default_rng(0)
    for _ in range(500):
        i, j, ok = count_coupling(12.0, 12.0, 0, rng)
        assert ok and i == j


def test_count_coupling_success_rate():
    rng = np.random.default_rng(1)
    n = 20000
    wins = 0
    for _ in range(n):
        i, j, ok = count_coupling(50.0, 48.0, 2, rng)
        assert ok == (i == j)
        assert j >= 2
        wins += ok
    lo, hi = wilson_ci(wins, n, 0.999)
    assert lo <= 1 - shifted_poisson_tv(50.0, 48.0, 2) <= hi


def test_count_coupling_marginals():
    rng = np.random.default_rng(2)
    I, J = zip(*[count_coupling(6.0, 4.0, 2, rng)[:2] for _ in range(20000)])
    assert abs(np.mean(I) - 6.0) < 4 * math.sqrt(6.0 / 20000)
    assert abs(np.mean(J) - 6.0) < 4 * math.sqrt(4.0 / 20000)
    assert min(J) >= 2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.integers(0, 2**31))
def test_maximal_coupling_frequency(w, seed):
    rng = np.random.default_rng(seed)
    p = np.array(w) / sum(w)
    q = np.roll(p, 1)
    us = rng.random(2000)
    out = [maximal_coupling(p, q, u) for u in us]
    agree = np.mean([ok for _, _, ok in out])
    expect = np.minimum(p, q).sum()
    assert abs(agree - expect) <= 4 * math.sqrt(expect * (1 - expect) / 2000) + 1e-9
    for i, j, ok in out:
        assert ok == (i == j) or not ok
        if not ok:
            assert p[i] > q[i] and q[j] > p[j]


def test_mark_coupling_rejects_origin(table):
    with pytest.raises(ValueError):
        mark_coupling((1, 0), (disk(2), disk(4)), 0, table)


@pytest.mark.parametrize("method", ["step", "path"])
def test_mark_coupling_identical_on_success(table, method):
    rng = np.random.default_rng(3)
    c = (20, 0)
    B, Bp = disk(2, c), disk(5, c)
    wins = 0
    for _ in range(200):
        m = mark_coupling((20, 1), (B, Bp), rng, table, method)
        if m.success:
            wins += 1
            assert m.srw.tobytes() == m.conditioned.tobytes()
    assert wins > 150


def test_mark_coupling_path_marginals(table):
    """a is harmonic off the origin and 1/a is harmonic for the conditioned walk."""
    rng = np.random.default_rng(4)
    c = (6, 0)
    x = (5, 0)
    ax = table.value(*x)
    srw, cond = [], []
    for _ in range(3000):
        m = mark_coupling(x, (disk(2, c), disk(4, c)), rng, table, "path")
        srw.append(table.value(*map(int, m.srw[-1])) / ax)
        cond.append(ax / table.value(*map(int, m.conditioned[-1])))
    for v in (srw, cond):
        assert abs(np.mean(v) - 1) < 4 * np.std(v) / math.sqrt(len(v)) + 1e-3


def test_thresholds_monotone_in_epsilon(table):
    K = ball_sites(disk(2))
    loose = choose_thresholds(K, 0.5, 0.5, 11, pilot=200, radius=64, table=table)
    tight = choose_thresholds(K, 0.5, 0.1, 11, pilot=200, radius=64, table=table)
    assert tight.m0 >= loose.m0
    assert tight.gamma0 >= loose.gamma0
    with pytest.raises(ValueError):
        choose_thresholds(K, 0.5, 1.5, 0, table=table)


def test_lemma2_empty_field_succeeds(table):
    # xi_K forced to 0 by the conditioning event; at tiny alpha nothing crosses B(L) either
    wins = 0
    for seed in range(40):
        out = lemma2_pipeline([(1, 0)], 1e-4, 0.2, 16, seed, thresholds=(0, 0.0), table=table,
                              N_predicate=lambda cfg: len(cfg) == 0)
        assert out.stage in STAGES
        assert out.diagnostics["xi_K"] == 0
        if out.diagnostics.get("Y") == 0:
            assert out.success and out.diagnostics["identical"]
            wins += 1
    assert wins >= 38


def test_lemma2_strict_rejects_large_gamma(table):
    K = ball_sites(disk(2))
    with pytest.raises(ValueError):
        lemma2_pipeline(K, 0.5, 0.2, 16, 0, thresholds=(8, math.inf), table=table, strict=True)
    out = lemma2_pipeline(K, 0.5, 0.2, 16, 0, thresholds=(8, math.inf), table=table)
    assert out.diagnostics["gamma0_eff"] == 15
    assert out.stage in STAGES
