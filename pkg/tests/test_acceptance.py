"""Acceptance suite: one test per criterion, each appending a pass/fail line
that is printed in the pytest terminal summary."""
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from gibbsgram import (GridSpec, NoiseSpec, SnapshotSchedule, build_expression, build_fhn,
                       build_linear, crosscheck_theorem, directional_reach_score,
                       empirical_gibbs_gramian, gibbs_gramian_quadrature, linear_gramian,
                       principal_basis, projection_error, simulate_ensemble,
                       snapshot_summed_gramian)
from gibbsgram.cli import main
from gibbsgram.experiments import (EIGEN_RATIO_BOUND, FhnExperimentConfig, T_HIGH, T_LOW,
                                   expected_verdicts)

from oracles import DIAG_GRAMIAN_TAU2, QUARTIC_GRAMIAN

SEEDS = (1, 2, 3, 4, 5)
TEMPERATURES = {"T_L": T_LOW, "T_H": T_HIGH}
# generated ensembles, reused by the trace identity check
ENSEMBLES = {}


def record(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    return ok


# 1. Monte-Carlo Gramian of a linear system vs the analytic Gramian

def test_criterion_1_linear_monte_carlo(acceptance_log):
    A = np.diag([-1.0, -2.0])
    B = np.array([[1.0], [1.0]])
    T, tau = 0.5, 2.0
    model = build_linear(A, B, np.zeros(2))
    t0 = time.perf_counter()
    ens = simulate_ensemble(model, NoiseSpec(T, 1, 100_000), SnapshotSchedule.from_times([tau], 1e-3))
    G_mc = empirical_gibbs_gramian(ens, tau).matrix / T
    elapsed = time.perf_counter() - t0
    ENSEMBLES["linear"] = ens
    G = linear_gramian(model.linear, tau).matrix
    np.testing.assert_allclose(G, DIAG_GRAMIAN_TAU2, rtol=1e-11)
    err = np.linalg.norm(G_mc - G) / np.linalg.norm(G)
    ok = record(acceptance_log, 1, err < 0.05 and elapsed < 60,
                f"relative error {err:.4f} (< 0.05), runtime {elapsed:.1f} s (< 60 s)")
    assert ok


# 2. Gaussian cost reproduces its covariance

def test_criterion_2_gaussian_quadrature(acceptance_log):
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(20):
        M = rng.normal(size=(2, 2))
        G = M @ M.T + 0.1 * np.eye(2)
        Ginv = np.linalg.inv(G)
        half = 9 * np.sqrt(np.linalg.eigvalsh(G)[-1])
        Q = gibbs_gramian_quadrature(lambda x: 0.5 * np.einsum("ni,ij,nj->n", x, Ginv, x),
                                     [(-half, half)] * 2, 241)
        worst = max(worst, np.linalg.norm(Q.matrix - G))
    ok = record(acceptance_log, 2, worst < 1e-6, f"max Frobenius error {worst:.2e} (< 1e-6) over 20 SPD")
    assert ok


# 3. quartic cost

def test_criterion_3_quartic_gramian(acceptance_log):
    g = gibbs_gramian_quadrature(lambda x: x[:, 0] ** 4, [(-4, 4)], 801).matrix[0, 0]
    ok = abs(g - 0.337989) <= 1e-4 and abs(g - QUARTIC_GRAMIAN) <= 1e-4
    record(acceptance_log, 3, ok, f"Gramian {g:.7f} vs 0.337989 and oracle {QUARTIC_GRAMIAN:.7f} (+-1e-4)")
    assert ok


# 4. Monte-Carlo histogram vs Fokker-Planck density for a double well

def test_criterion_4_double_well_crosscheck(acceptance_log):
    model = build_expression(["x1 - x1^3"], [[1.0]], [0.0], label="double_well")
    T, tau = 0.5, 2.0
    t0 = time.perf_counter()
    ens = simulate_ensemble(model, NoiseSpec(T, 3, 100_000), SnapshotSchedule.from_times([tau], 1e-3))
    rep = crosscheck_theorem(model, T, tau, ens, GridSpec([(-3.0, 3.0)], [601]), bins=40)
    elapsed = time.perf_counter() - t0
    ENSEMBLES["double_well"] = ens
    ok = rep.l1_distance < 0.05 and rep.gramian_rel_error < 0.05 and elapsed < 300
    record(acceptance_log, 4, ok,
           f"L1 {rep.l1_distance:.4f} (< 0.05), Gramian relative error {rep.gramian_rel_error:.4f} "
           f"(< 0.05), runtime {elapsed:.1f} s (< 300 s)")
    assert ok


# 5-7. network reproduction over five seeds per temperature

@pytest.mark.slow
def test_criterion_5_eigenvalue_ratio(fhn_runs, acceptance_log):
    details, ok = [], True
    for name, T in TEMPERATURES.items():
        ratios = [fhn_runs.get(T, s).correlation.eigenvalue_ratios[2] for s in SEEDS]
        runtime = sum(fhn_runs.elapsed[(T, s)] for s in SEEDS)
        good = all(r < EIGEN_RATIO_BOUND for r in ratios) and runtime < 900
        ok &= good
        details.append(f"{name} lambda3/lambda1 = [{', '.join(f'{r:.4f}' for r in ratios)}] "
                       f"runtime {runtime:.0f} s")
    record(acceptance_log, 5, ok, f"(< {EIGEN_RATIO_BOUND}, < 900 s) " + "; ".join(details))
    assert ok


@pytest.mark.slow
def test_criterion_6_correlation_verdicts(fhn_runs, acceptance_log):
    details, ok = [], True
    for name, T in TEMPERATURES.items():
        want = {k: v for k, v in expected_verdicts(T).items()}
        matched = [all(fhn_runs.get(T, s).correlation.verdicts[k] == v for k, v in want.items())
                   for s in SEEDS]
        ok &= all(matched)
        details.append(f"{name} {sum(matched)}/{len(SEEDS)} seeds match")
    record(acceptance_log, 6, ok, "; ".join(details))
    assert ok


@pytest.mark.slow
def test_criterion_7_synchronization(fhn_runs, acceptance_log):
    horizon = FhnExperimentConfig().t_stop
    quick = 0.1 * horizon
    ok, rows = True, []
    for s in SEEDS:
        lo, hi = fhn_runs.get(T_LOW, s).sync, fhn_runs.get(T_HIGH, s).sync
        bridge = np.isfinite(hi.settling((2, 3))) and 10 * hi.settling((2, 3)) <= lo.settling((2, 3))
        local = all(m.settling(p) <= quick for m in (lo, hi) for p in ((1, 2), (3, 4)))
        ok &= bool(bridge and local)
        rows.append(f"seed {s}: d23 {lo.settling((2, 3)):.1f}->{hi.settling((2, 3)):.1f}, "
                    f"d12/d34 max {max(m.settling(p) for m in (lo, hi) for p in ((1, 2), (3, 4))):.1f}")
    record(acceptance_log, 7, ok, f"(2,3) >= 10x faster at T_H, (1,2),(3,4) within {quick:g}; "
           + "; ".join(rows))
    assert ok


# 8. trace identity of the projection error

def _small_network_ensemble():
    model = build_fhn(4, np.array([[0, 0.1, 0, 0], [0.1, 0, 0.005, 0], [0, 0.005, 0, 0.1],
                                   [0, 0, 0.1, 0]]), x0=FhnExperimentConfig().x0)
    return simulate_ensemble(model, NoiseSpec(T_HIGH, 9, 50),
                             SnapshotSchedule.from_range(1.0, 1.0, 100.0, 0.01))


def test_criterion_8_trace_identity(acceptance_log):
    ens_list = dict(ENSEMBLES, network=_small_network_ensemble())
    worst = 0.0
    for ens in ens_list.values():
        S = snapshot_summed_gramian(ens).matrix
        for k in range(1, ens.n + 1):
            rho = principal_basis(snapshot_summed_gramian(ens), k).basis
            lhs = projection_error(ens, rho) + np.trace(rho.T @ S @ rho)
            worst = max(worst, abs(lhs - np.trace(S)) / np.trace(S))
    ok = record(acceptance_log, 8, worst <= 1e-9,
                f"max relative residual {worst:.2e} (<= 1e-9) over {len(ens_list)} ensembles "
                f"({', '.join(sorted(ens_list))}), every k")
    assert ok


# 9. the principal eigenvector maximizes the reach score

def test_criterion_9_principal_direction(acceptance_log):
    ens = _small_network_ensemble()
    tau = 50.0
    G = empirical_gibbs_gramian(ens, tau)
    basis = principal_basis(G, 1)
    lam1 = basis.eigenvalues[0]
    rng = np.random.default_rng(9)
    E = rng.normal(size=(500, ens.n))
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    scores = np.array([directional_reach_score(ens, e, tau) for e in E])
    at_top = directional_reach_score(ens, basis.basis[:, 0], tau)
    ok = scores.max() <= lam1 + 1e-10 and abs(at_top - lam1) <= 1e-10 * max(1.0, lam1)
    record(acceptance_log, 9, ok, f"max score {scores.max():.6f} <= lambda1 {lam1:.6f}, "
           f"score at eigenvector differs by {abs(at_top - lam1):.1e}")
    assert ok


# 10. reruns and worker counts give identical outputs

LINEAR_RUN = """\
[model]
kind = "linear"
A = [[-1.0, 0.5], [0.0, -2.0]]
B = [[1.0], [1.0]]
x0 = [0.2, 0.0]

[noise]
temperature = 0.5
seed = 5
paths = 300

[schedule]
dt = 0.01
start = 0.5
step = 0.5
stop = 3.0

[gramian]
streaming = true

[reduce]
k = 1

[oracle]
tau = 1.0
bounds = [[-3.0, 3.0], [-3.0, 3.0]]
points = [201, 201]
max_l1 = 1.0
max_gramian_rel_error = 1.0

[validate_linear]
tau = 1.0
replicates = 2
tolerance = 1.0
"""

NETWORK_RUN = '[repro_fhn]\ntemperature = "high"\nseed = 4\npaths = 20\nstop = 50.0\n'


def _digest(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path, acceptance_log):
    lin = tmp_path / "linear.toml"
    lin.write_text(LINEAR_RUN)
    net = tmp_path / "network.toml"
    net.write_text(NETWORK_RUN)
    commands = [("simulate", lin), ("gramian", lin), ("reduce", lin), ("oracle", lin),
                ("validate-linear", lin), ("repro-fhn", net)]
    digests = {}
    for label, workers in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / label
        for cmd, cfg in commands:
            code = main([cmd, "--config", str(cfg), "--out", str(out), "--workers", str(workers),
                         "--format", "both"])
            assert code in (0, 2), cmd
        digests[label] = _digest(out)
    manifests = [k for k in digests["a"] if k.endswith("manifest.json")]
    ok = len(manifests) == len(commands) and digests["a"] == digests["b"] == digests["c"]
    record(acceptance_log, 10, ok, f"{len(digests['a'])} files in {len(manifests)} run directories "
           "identical across 2 reruns and workers 1/3")
    assert ok
