"""
Coupling two interlacements far from a set K
============================================

Run the staged coupling a few hundred times and see where it fails.  At
these sizes it almost always fails at the entrance or reuse stage; the
per-stage probabilities show why.
"""

import collections
import math

import numpy as np

from ri2d.couplings import count_coupling, lemma2_pipeline, shifted_poisson_tv
from ri2d.lattice import ball_sites, disk
from ri2d.potential import default_table

table = default_table()
K = ball_sites(disk(2))

# the count stage on its own
rng = np.random.default_rng(0)
wins = sum(count_coupling(50.0, 48.0, 2, rng)[2] for _ in range(20_000))
print(f"count coupling: {wins / 20_000:.4f} vs 1 - TV = {1 - shifted_poisson_tv(50, 48, 2):.4f}")

# most replicas stop at the first stage: D_K, the farthest point reached by
# the trajectories through K before their last visit, is heavy tailed and
# often exceeds n - 1
for n in (16, 32):
    stages = collections.Counter()
    p_entry, p_reuse = [], []
    for seed in range(200):
        out = lemma2_pipeline(K, 1.0, 0.2, n, seed, thresholds=(8, math.inf), table=table)
        stages[out.stage if not out.success else "success"] += 1
        d = out.diagnostics
        if "p_entry" in d:
            p_entry.append(d["p_entry"])
        if "p_reuse" in d:
            p_reuse.append(d["p_reuse"])
    print(f"n = {n}: {dict(stages)}")
    print(f"   mean entrance-coupling probability {np.mean(p_entry):.3g}"
          + (f", mean no-return probability {np.mean(p_reuse):.3g}" if p_reuse else ""))
