"""
How many excursions does it take?
=================================

The number of excursions of the interlacement between two circles around a
far disk is compound Poisson.  Compare its spread with the normal limit and
with the budgets used in the covering argument.
"""

import math

import numpy as np
from scipy import stats as sps

from ri2d.excursions import psi, torus_excursion_experiment
from ri2d.stats import NSampleSpec, downward_prob, ks_normal_check, psi_star, ri_count_budget

rng = np.random.default_rng(2)
for ls in (25, 100, 400):
    ks = ks_normal_check(ls, 50_000, rng)
    p, ci = downward_prob(ls, 50_000, rng)
    print(f"ln s = {ls:3d}: KS to N(0,1) {ks:.4f}, P[N <= mean - sd/2] = {p:.3f} "
          f"(normal {sps.norm.cdf(-0.5):.3f})")

# exact capacity rates are smaller than 2 ln s at moderate s
sp = NSampleSpec.exact(400)
print(f"s = 400: rate {sp.rate:.3f} vs 2 ln s = {2 * math.log(400):.3f}")
s = 1e8
print(f"s = 1e8: psi* = {psi_star(s):.1f}, RI count budget = {ri_count_budget(s):.1f}")

# on the torus the count of excursions between dB(n) and dB(e n)
for n in (16, 32):
    runs = [torus_excursion_experiment(n, math.e, 1.0, rng) for _ in range(5)]
    c = np.mean([r.count for r in runs])
    print(f"n = {n}: mean count {c:.1f}, psi_(n,1) = {psi(n, 1.0, math.e):.1f}, "
          f"covered {sum(r.coverage.complete for r in runs)}/5")
