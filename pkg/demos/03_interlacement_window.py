"""
Random interlacements seen from a small window
==============================================

Sample the trajectories that visit a disk, cut them into noodles, look at
the vacant set, and thin the intensity.
"""

import math

import numpy as np

from ri2d.interlacements import alpha_thinning, noodle_config, sample_hitting_bundle
from ri2d.lattice import ball_sites, disk
from ri2d.potential import default_table

table = default_table()
rng = np.random.default_rng(11)
W = ball_sites(disk(6))

b = sample_hitting_bundle(W, 1.0, None, rng, table=table)
print(f"{b.xi_K} trajectories hit B(6); mean pi * alpha * cap = {math.pi * b.capacity:.2f}")
cfg = noodle_config(b.trajectories, W)
print(f"{len(cfg)} noodles, {len(cfg.vacant())} of {len(W)} sites vacant")

# lower intensity: thinning keeps a random subset, so the vacant set can only grow
for a in (0.5, 0.25, 0.1):
    b = alpha_thinning(b, a, rng)
    v = noodle_config(b.trajectories, W).vacant()
    print(f"alpha = {a:4}: {b.xi_K:2d} trajectories, {len(v):3d} vacant sites")

# a picture of the last one
occ = set(map(tuple, noodle_config(b.trajectories, W).occupied().tolist()))
Wset = set(map(tuple, W.tolist()))
for y in range(6, -7, -1):
    print("".join("#" if (x, y) in occ else "." if (x, y) in Wset else " "
                  for x in range(-6, 7)))
