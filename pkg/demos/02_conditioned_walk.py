"""
The walk conditioned to avoid the origin
========================================

Its one-step law is the Doob transform of simple random walk by a.  We
compare one-step laws, then estimate how often the conditioned walk from
near a distant disk ever reaches it.
"""

import numpy as np

from ri2d.lattice import Disk, ball_sites
from ri2d.potential import default_table
from ri2d.walks import conditioned_path, conditioned_step_distribution

table = default_table()
rng = np.random.default_rng(5)

# next to the origin the walk is pushed away; far out it looks like SRW
for x in [(1, 0), (3, 2), (30, 0)]:
    nb, p = conditioned_step_distribution(x, table)
    print(x, {tuple(q): round(float(w), 4) for q, w in zip(nb.tolist(), p)})

# hitting a disk of radius 4 centred at (40, 0), started on a circle of radius 8 around it
B = ball_sites(Disk((40, 0), 4))
hits = 0
trials = 300
for _ in range(trials):
    path = conditioned_path((48, 0), B, table, rng, kill_radius=400, record=False)
    end = tuple(path.sites[-1])
    hits += end in set(map(tuple, B.tolist()))
print(f"P[hit before leaving B(0, 400)] ~ {hits / trials:.3f}")
