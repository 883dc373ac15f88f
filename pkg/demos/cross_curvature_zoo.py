"""
The sign of cross-curvature across costs
=========================================

Nonnegative cross-curvature is what lets local tests stand in for global
ones.  Quadratic, Bregman and exponential-kernel costs are flat; the
log-divergence is positive with a closed-form value; on the sphere it is
nonnegative away from antipodal pairs.  Everything below is computed with
finite differences of the cost.
"""

import warnings

import numpy as np

from gdgc.core import NumericalNoise
from gdgc.costs import (bregman_cost, exponential_kernel_cost, log_divergence_cost,
                        negative_entropy, quadratic_cost, quadratic_potential)
from gdgc.geometry import cross_curvature
from gdgc.transforms import SearchConfig
from gdgc.verify import check_cross_curvature, sphere_chart_sampler

warnings.simplefilter("ignore", NumericalNoise)

flat = {
    "quadratic": (quadratic_cost(1.0, 2), (-2.0, 2.0)),
    "entropy Bregman": (bregman_cost(negative_entropy(2)), (0.2, 3.0)),
    "exponential kernel": (exponential_kernel_cost(np.eye(2), 1.0), (-1.0, 1.0)),
}
for name, (c, box) in flat.items():
    rep = check_cross_curvature(c, 100, SearchConfig(box=box), tol=1e-5, method="fd")
    print(f"{name:20s} max |S| = {rep.details['max_abs']:.1e}")

alpha = 0.3
c = log_divergence_cost(quadratic_potential(1.0, dim=2), alpha)
x, y = np.array([0.2, -0.1]), np.array([-0.3, 0.4])
xi, eta = np.array([1.0, 0.5]), np.array([-0.2, 1.0])
val = cross_curvature(c, x, y, xi, eta, method="fd")
closed = 2 * alpha * (xi @ c.hess_xy(x, y) @ eta) ** 2
print(f"log-divergence       S = {val:.6f}, closed form {closed:.6f}")

rep = check_cross_curvature(None, 100, sampler=sphere_chart_sampler(), method="fd")
print(f"sphere               min S = {rep.details['min_value']:.2e}")
