# coding: utf-8

# # Two routes to the same density
#
# For the double well dx = (x - x^3) dt + sqrt(T) dW started at the origin,
# the distribution of x(tau) can be found by simulating many paths or by
# solving the forward Kolmogorov equation on a grid. Both routes should
# agree, and the empirical Gibbs Gramian should equal the grid density's
# second moment.

import numpy as np
from scipy.integrate import trapezoid

from gibbsgram import (GridSpec, NoiseSpec, SnapshotSchedule, build_expression,
                       crosscheck_theorem, simulate_ensemble)

model = build_expression(["x1 - x1^3"], [[1.0]], [0.0], label="double_well")
T, tau = 0.5, 2.0

ens = simulate_ensemble(model, NoiseSpec(T, 3, 100_000), SnapshotSchedule.from_times([tau], 1e-3))
rep = crosscheck_theorem(model, T, tau, ens, GridSpec([(-3.0, 3.0)], [601]), bins=40)

print(f"L1 distance between histogram and grid density: {rep.l1_distance:.4f}")
print(f"relative Gramian error: {rep.gramian_rel_error:.4f}")

# A coarse text histogram of both, bin by bin.

d = rep.density
x, rho = d.grid.axes[0], d.values
edges = np.linspace(-3, 3, 13)
hist, _ = np.histogram(ens.at(tau)[:, 0], bins=edges)
hist = hist / ens.path_count
for lo, hi, h in zip(edges[:-1], edges[1:], hist):
    m = (x >= lo) & (x <= hi)
    grid_mass = trapezoid(rho[m], x[m])
    print(f"[{lo:+.1f},{hi:+.1f})  mc {h:.3f}  grid {grid_mass:.3f}  " + "#" * int(200 * h))
