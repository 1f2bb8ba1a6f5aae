# coding: utf-8

# # Reducing a model with the Gibbs Gramian
#
# The eigenvectors of the snapshot-summed Gramian form the POD basis. Its
# leading vectors capture the directions the noise actually reaches, and
# the ensemble-averaged projection error plus the captured energy always
# adds up to the total energy.

import numpy as np

from gibbsgram import (NoiseSpec, SnapshotSchedule, build_linear, directional_reach_score,
                       empirical_gibbs_gramian, galerkin_reduce, principal_basis,
                       projection_error, simulate_ensemble, snapshot_summed_gramian)

rng = np.random.default_rng(0)
n = 6
A = -np.diag(np.linspace(0.5, 5.0, n)) + 0.1 * rng.normal(size=(n, n))
B = np.zeros((n, 1))
B[0] = 1.0
model = build_linear(A, B, np.zeros(n))

ens = simulate_ensemble(model, NoiseSpec(0.5, 2, 2000), SnapshotSchedule.from_range(0.5, 0.5, 5.0, 0.01))
S = snapshot_summed_gramian(ens)
print("eigenvalues:", np.round(S.eigenvalues, 4))

total = np.trace(S.matrix)
for k in range(1, n + 1):
    rho = principal_basis(S, k).basis
    err = projection_error(ens, rho)
    kept = np.trace(rho.T @ S.matrix @ rho)
    print(f"k={k}: error {err:9.4f}  kept {kept:9.4f}  sum - total {err + kept - total:+.1e}")

# The leading eigenvector of the Gramian at one time is the single direction
# with the largest mean squared reach. Random directions never beat it.

tau = 5.0
G = empirical_gibbs_gramian(ens, tau)
top = principal_basis(G, 1)
dirs = rng.normal(size=(200, n))
dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
best_random = max(directional_reach_score(ens, e, tau) for e in dirs)
print(f"lambda1 {top.eigenvalues[0]:.5f}, best random direction {best_random:.5f}")

# Galerkin projection onto a two-dimensional basis gives a reduced model.

red = galerkin_reduce(model, principal_basis(S, 2))
print("reduced drift matrix\n", np.round(red.linear.A, 4))
