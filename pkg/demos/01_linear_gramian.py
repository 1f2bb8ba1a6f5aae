# coding: utf-8

# # Linear Gramians from noise
#
# For a linear system dx = A x dt + B u dt the controllability Gramian is
# G = int_0^tau e^{As} B B^T e^{A^T s} ds. Driving the same system with
# white noise of intensity T on the input channel and no control gives a
# state whose second moment at time tau is T * G. This script checks that
# numerically for a small stable system.

import time

import numpy as np

from gibbsgram import (NoiseSpec, SnapshotSchedule, build_linear, empirical_gibbs_gramian,
                       linear_gramian, simulate_ensemble)

A = np.diag([-1.0, -2.0])
B = np.array([[1.0], [1.0]])
model = build_linear(A, B, x0=np.zeros(2))

# The analytic Gramian (matrix exponential of an augmented block matrix).

tau = 2.0
G = linear_gramian(model.linear, tau)
print("analytic Gramian\n", G.matrix)

# Now the Monte-Carlo route. Each path draws its own reproducible noise
# stream, so the answer depends only on the seed.

T = 0.5
t0 = time.perf_counter()
ens = simulate_ensemble(model, NoiseSpec(T, seed=1, path_count=100_000),
                        SnapshotSchedule.from_times([tau], dt=1e-3))
G_mc = empirical_gibbs_gramian(ens, tau).matrix / T
print(f"Monte-Carlo estimate ({time.perf_counter() - t0:.1f} s)\n", G_mc)

err = np.linalg.norm(G_mc - G.matrix) / np.linalg.norm(G.matrix)
print(f"relative Frobenius error: {err:.4f}")

# The error shrinks like one over the square root of the path count.

for paths in (1_000, 10_000):
    e = simulate_ensemble(model, NoiseSpec(T, 1, paths), SnapshotSchedule.from_times([tau], 1e-3))
    Gp = empirical_gibbs_gramian(e, tau).matrix / T
    print(paths, "paths:", round(np.linalg.norm(Gp - G.matrix) / np.linalg.norm(G.matrix), 4))
