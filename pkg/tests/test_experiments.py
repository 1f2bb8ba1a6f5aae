import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gibbsgram import (ConfigurationError, NoiseSpec, NumericError, SnapshotSchedule, build_fhn,
                       build_linear, simulate_ensemble)
from gibbsgram.experiments import (APPROX, DIFFERENT, INCONCLUSIVE, T_HIGH, T_LOW,
                                   FhnExperimentConfig, block_similarity, classify,
                                   correlation_report, expected_verdicts, replicate_seed,
                                   run_fhn_reproduction, run_linear_validation, sync_metrics)
from gibbsgram.reduction import ProjectionBasis

# [e1 e2] blocks per neuron as published for the two noise levels
TABLE_LOW = [[[-0.0805, 0.0629], [-0.4985, 0.4906]], [[-0.0890, 0.0669], [-0.4869, 0.5013]],
             [[0.0724, 0.0902], [0.4913, 0.4969]], [[0.0801, 0.0871], [0.4971, 0.4868]]]
TABLE_HIGH = [[[-0.0619, 0.4947], [-0.4954, -0.0697]], [[-0.0622, 0.4954], [-0.4966, -0.0702]],
              [[-0.0611, 0.4968], [-0.4964, -0.0533]], [[-0.0611, 0.4976], [-0.4964, -0.0531]]]


def table_basis(table):
    B = np.array(table).reshape(8, 2)
    return ProjectionBasis(B, np.array([1.0, 0.4, 0.1, 0.05, 0.01, 0.01, 0.0, 0.0]))


def test_reference_configuration():
    cfg = FhnExperimentConfig(temperature=T_LOW)
    assert T_LOW == pytest.approx(0.0025, rel=1e-15) and T_HIGH == 0.25
    assert cfg.path_count == 1000 and cfg.dt == 0.01 and cfg.k == 2
    sched = cfg.schedule()
    assert len(sched) == 10_000
    assert sched.times[0] == pytest.approx(0.1) and sched.horizon == 1000.0
    eta = cfg.coupling_matrix()
    assert eta[0, 1] == eta[2, 3] == 0.1 and eta[1, 2] == 0.005
    assert np.count_nonzero(eta) == 6
    m = cfg.model()
    np.testing.assert_array_equal(m.initial_state, [-1, 0, 0, 2, 1, 0, 0, -2])
    np.testing.assert_array_equal(m.constant_gain[:, 0], [1, 0] * 4)
    assert cfg.overrides() == {}


def test_overrides_are_listed():
    cfg = FhnExperimentConfig(temperature=0.1, path_count=50, seed=3, dt=0.005)
    assert cfg.overrides() == {"path_count": 50, "temperature": 0.1}


@settings(max_examples=50, deadline=None)
@given(arrays(float, (2, 2), elements=st.floats(-5, 5)), arrays(float, (2, 2), elements=st.floats(-5, 5)))
def test_similarity_in_unit_interval(a, b):
    s = block_similarity(a, b)
    assert 0.0 <= s <= 1.0 + 1e-12


def test_similarity_ignores_sign_and_scale():
    a = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert block_similarity(a, -3 * a) == pytest.approx(1.0)


def test_classification_thresholds():
    assert classify(0.995) == APPROX
    assert classify(0.95) == INCONCLUSIVE
    assert classify(0.5) == DIFFERENT
    assert classify(0.99) == INCONCLUSIVE and classify(0.90) == INCONCLUSIVE


def test_published_low_noise_table_gives_published_verdicts():
    rep = correlation_report(table_basis(TABLE_LOW), T_LOW, 4)
    assert rep.verdicts[(1, 2)] == APPROX
    assert rep.verdicts[(3, 4)] == APPROX
    assert rep.verdicts[(2, 3)] == DIFFERENT
    assert rep.passed


def test_published_high_noise_table_gives_published_verdicts():
    rep = correlation_report(table_basis(TABLE_HIGH), T_HIGH, 4)
    assert set(rep.verdicts.values()) == {APPROX}
    assert rep.passed


def test_swapped_tables_fail_with_readable_diff():
    rep = correlation_report(table_basis(TABLE_HIGH), T_LOW, 4)
    assert not rep.passed
    assert any("rho2 vs rho3: expected not_approx_equal" in f for f in rep.failures)


def test_eigenvalue_ratio_failure_reported():
    b = table_basis(TABLE_LOW)
    b = ProjectionBasis(b.basis, np.array([1.0, 0.4, 0.2, 0, 0, 0, 0, 0]))
    rep = correlation_report(b, T_LOW, 4)
    assert rep.failures == ["lambda3/lambda1 = 0.2000 is not < 0.15"]


def test_report_is_json_ready():
    rep = correlation_report(table_basis(TABLE_LOW), T_LOW, 4).report()
    text = json.dumps(rep)
    assert '"2-3": "not_approx_equal"' in text
    assert rep["thresholds"] == {"similar": 0.99, "dissimilar": 0.9, "eigen_ratio": 0.15}
    assert len(rep["eigenvalue_ratios"]) == 8


def test_other_temperatures_have_no_expectations():
    assert expected_verdicts(0.1) == {}


# synchronization

def test_identical_uncoupled_neurons_stay_synchronized():
    m = build_fhn(4, np.zeros((4, 4)), x0=[-1, 0.5] * 4)
    ens = simulate_ensemble(m, NoiseSpec(0.0, 0, 2), SnapshotSchedule.from_range(1, 1, 30, 0.01))
    res = sync_metrics(ens)
    assert np.all(res.differences == 0)
    assert res.summary.settling((2, 3)) == 1.0


def test_sync_metrics_need_network_layout():
    m = build_linear(np.eye(2) * -1, np.ones((2, 1)), [0, 0])
    ens = simulate_ensemble(m, NoiseSpec(0.0, 0, 1), SnapshotSchedule.from_times([1.0], 0.1))
    with pytest.raises(ConfigurationError, match="FitzHugh-Nagumo"):
        sync_metrics(ens)


def test_settling_requires_a_hold_period():
    m = build_fhn(2, [[0, 0.1], [0.1, 0]], x0=[-1, 0, 0, 2])
    ens = simulate_ensemble(m, NoiseSpec(0.0, 0, 1), SnapshotSchedule.from_range(0.1, 0.1, 200, 0.01))
    res = sync_metrics(ens, pairs=((1, 2),))
    d = res.differences[0, :, 0]
    t = ens.times
    s = res.summary.settling((1, 2))
    k = int(np.flatnonzero(np.isclose(t, s))[0])
    hold = (t >= s) & (t <= s + 10)
    assert np.all(d[hold] < 0.1)
    assert k == 0 or d[k - 1] >= 0.1


def test_sync_tracker_matches_stored_metrics():
    cfg = FhnExperimentConfig(temperature=T_HIGH, seed=2, path_count=8, t_stop=60)
    run = run_fhn_reproduction(cfg, workers=3)
    ens = simulate_ensemble(cfg.model(), cfg.noise(), cfg.schedule())
    res = sync_metrics(ens)
    np.testing.assert_array_equal(run.sync.median_settling, res.summary.median_settling)
    np.testing.assert_array_equal(run.sync_sample, res.differences[0])


# small reproduction runs

def test_small_run_writes_run_directory(tmp_path):
    cfg = FhnExperimentConfig(temperature=T_HIGH, seed=4, path_count=10, t_stop=20)
    run = run_fhn_reproduction(cfg)
    manifest = json.loads(run.save(tmp_path).read_text())
    d = tmp_path / "repro_fhn-seed4"
    names = sorted(f["name"] for f in manifest["files"])
    assert names == ["basis.csv", "basis.json", "gramian.csv", "gramian.json", "report.json",
                     "sync_path0.csv"]
    report = json.loads((d / "report.json").read_text())
    assert report["overrides"] == {"path_count": 10, "t_stop": 20}
    assert report["config"]["seed"] == 4
    assert (d / "sync_path0.csv").read_text().splitlines()[0] == "t,d12,d34,d23"
    assert run.gramian.snapshot_count == 200


def test_reports_identical_across_reruns_and_workers(tmp_path):
    cfg = FhnExperimentConfig(temperature=T_LOW, seed=9, path_count=12, t_stop=15)
    paths = []
    for i, w in enumerate((1, 1, 4)):
        paths.append(run_fhn_reproduction(cfg, workers=w).save(tmp_path / str(i)))
    data = [p.read_bytes() for p in paths]
    assert data[0] == data[1] == data[2]


def test_divergence_aborts_experiment(monkeypatch):
    import gibbsgram.sde as sde
    monkeypatch.setattr(sde, "DIVERGENCE_LIMIT", 1.5)
    cfg = FhnExperimentConfig(temperature=T_HIGH, seed=1, path_count=4, t_stop=5)
    with pytest.raises(NumericError, match="experiment aborted: .*path"):
        run_fhn_reproduction(cfg)


# linear validation

def test_noiseless_linear_validation_is_exact():
    m = build_linear([[-1.0, 0.0], [0.0, -2.0]], [[1.0], [1.0]], [1.0, -1.0])
    res = run_linear_validation(m, 0.0, 2.0, 3, dt=1e-3, replicates=2)
    assert res.relative_error == 0.0
    assert res.target.startswith("noiseless")
    assert res.replicate_errors == (0.0, 0.0)


def test_ou_linear_validation():
    from gibbsgram.dynamics import LinearSystem
    res = run_linear_validation(LinearSystem([[-1.0]], [[1.0]]), 1.0, 1.0, 100_000, dt=1e-3,
                                seed=5, replicates=2)
    assert res.relative_error < 0.05
    band = res.band()
    assert band["replicates"] == 2 and band["max"] < 0.05


def test_replicate_seeds_distinct_and_stable():
    seeds = [replicate_seed(7, r) for r in range(10)]
    assert len(set(seeds)) == 10 and 7 not in seeds
    assert seeds == [replicate_seed(7, r) for r in range(10)]
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_validation_rejects_nonlinear_model():
    with pytest.raises(ConfigurationError, match="linear"):
        run_linear_validation(build_fhn(1, [[0]]), 1.0, 1.0, 10)


# time-step check for the network study

@pytest.mark.slow
@pytest.mark.parametrize("temperature", [T_LOW, T_HIGH], ids=["low", "high"])
def test_verdicts_stable_under_step_halving(fhn_runs, temperature):
    base = fhn_runs.get(temperature, 1).correlation
    half = run_fhn_reproduction(FhnExperimentConfig(temperature=temperature, seed=1, dt=0.005))
    fine = half.correlation
    print(f"T={temperature}: dt=0.01 ratios {base.eigenvalue_ratios[:4].round(5)}, "
          f"dt=0.005 ratios {fine.eigenvalue_ratios[:4].round(5)}")
    assert fine.verdicts == base.verdicts
    np.testing.assert_allclose(fine.similarity, base.similarity, atol=0.01)
