"""
The potential kernel and capacities
===================================

Tabulate a(x), look at a few exact values and at how the capacity of a
far-away disk together with the origin grows with its distance s.
"""

import math

import numpy as np

from ri2d.lattice import ball_sites, disk
from ri2d.potential import capacity, default_table
from ri2d.stats import target_capacity

# the table is solved once and cached on disk
table = default_table()
print("kappa =", table.kappa, " closed form:", (2 * np.euler_gamma + math.log(8)) / math.pi)

# a few values near the origin, next to the leading asymptotics
for p in [(1, 0), (1, 1), (2, 0), (5, 5), (40, 0)]:
    r = math.hypot(*p)
    print(p, f"a = {table.value(*p):.10f}   (2/pi) ln r + kappa = "
             f"{2 / math.pi * math.log(r) + table.kappa:.10f}")

# a is harmonic away from the origin
print("max harmonicity residual on B(50):", table.harmonicity_residual(50))

# capacity of a ball grows like (2/pi) ln r
for r in (2, 4, 8, 16):
    c = capacity(ball_sites(disk(r)), table)
    print(f"cap B({r:2d}) = {c:.4f}   (2/pi) ln r = {2 / math.pi * math.log(r):.4f}")

# {0} with a disk of radius s/ln^2 s at distance s: the ratio approaches 1 very slowly
for s in (200, 400, 800):
    c = target_capacity(s, table)
    print(f"s = {s}: cap * pi / (2 ln s) = {c * math.pi / (2 * math.log(s)):.4f}")
