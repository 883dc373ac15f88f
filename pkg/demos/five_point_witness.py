"""
When the five-point property fails
===================================

``sin`` is 1-smooth, so the quadratic cost with L = 1 majorizes it and
gradient descent with step 1 decreases it.  It is not convex though, and the
five-point inequality that yields the 1/n rate fails.  The sampled checker
returns a witness that can be replayed from its seed.
"""

import numpy as np

from gdgc.core import Objective
from gdgc.costs import quadratic_cost
from gdgc.transforms import SearchConfig, surrogate_from_ctransform
from gdgc.verify import check_cross_convexity, check_five_point

sin = Objective(lambda x: float(np.sin(x[0])), np.cos, lambda x: -np.sin(x).reshape(1, 1))
cost = quadratic_cost(1.0, 1)
cfg = SearchConfig(box=(-4.0, 4.0), restarts=1, seed=3)

# the surrogate c(x, y) + sin^c(y), with sin^c computed numerically
phi = surrogate_from_ctransform(sin, cost, cfg)
print("cross-convex:", check_cross_convexity(sin, cost, samples=50, cfg=cfg).passed)

rep = check_five_point(phi, samples=40, stop_after=1)
w = rep.first_violation()
print(f"five-point violated at sample {w['index']} (seed {rep.seed}):")
print(f"  x = {w['x'][0]:.4f}, y0 = {w['y0'][0]:.4f}, lhs - rhs = {w['margin']:.3f}")

again = check_five_point(surrogate_from_ctransform(sin, cost, cfg), samples=40, stop_after=1)
print("replayed from the seed:", again.first_violation()["index"] == w["index"])
