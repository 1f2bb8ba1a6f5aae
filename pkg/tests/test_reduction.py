import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import ortho_group

from gibbsgram import (ConfigurationError, EnsembleSnapshots, GramianMatrix, NoiseSpec,
                       SnapshotSchedule, build_expression, build_fhn, build_linear,
                       deterministic_trajectory, directional_reach_score, empirical_gibbs_gramian,
                       galerkin_reduce, principal_basis, projection_error, simulate_ensemble,
                       snapshot_summed_gramian)
from gibbsgram.experiments import T_LOW, FhnExperimentConfig


def test_diagonal_gramian_basis():
    b = principal_basis(np.diag([3.0, 1.0]), 1)
    assert b.basis[:, 0].tolist() == [1.0, 0.0]
    assert b.eigenvalues.tolist() == [3.0, 1.0]


def test_symmetric_2x2_basis():
    b = principal_basis(GramianMatrix([[2.0, 1.0], [1.0, 2.0]], "analytic"), 1)
    np.testing.assert_allclose(b.basis[:, 0], [2 ** -0.5, 2 ** -0.5], rtol=1e-14)
    assert b.eigenvalues[0] == pytest.approx(3.0, rel=1e-14)


def test_sign_convention():
    b = principal_basis(np.array([[1.0, -0.9], [-0.9, 1.0]]), 2)
    for col in b.basis.T:
        assert col[np.flatnonzero(col)[0]] > 0


def test_ties_in_descending_lexicographic_order():
    b = principal_basis(np.eye(3), 3)
    assert b.basis.tolist() == np.eye(3).tolist()


def test_k_validation():
    for k in (0, 3, 1.5):
        with pytest.raises(ConfigurationError):
            principal_basis(np.eye(2), k)


spd = arrays(float, (4, 4), elements=st.floats(-3, 3)).map(lambda M: M @ M.T)


@settings(max_examples=40, deadline=None)
@given(spd, st.integers(1, 4))
def test_basis_orthonormal_ordered_and_pure(G, k):
    a = principal_basis(G, k)
    b = principal_basis(G.copy(), k)
    assert a.basis.tobytes() == b.basis.tobytes()
    np.testing.assert_allclose(a.basis.T @ a.basis, np.eye(k), atol=1e-10)
    assert np.all(np.diff(a.eigenvalues) <= 0)


def test_basis_files(tmp_path):
    b = principal_basis(np.diag([3.0, 2.0, 1.0]), 2)
    b.to_csv(tmp_path / "b.csv")
    b.to_json(tmp_path / "b.json")
    assert np.loadtxt(tmp_path / "b.csv", delimiter=",").shape == (3, 2)
    assert '"explained_fraction"' in (tmp_path / "b.json").read_text()
    np.testing.assert_allclose(b.explained_fraction, [0.5, 1 / 3])


# projection error

def random_ensemble(rng, P=30, K=4, n=3):
    sched = SnapshotSchedule.from_times(np.arange(1, K + 1) * 0.1, 0.1)
    data = rng.normal(size=(P, K, n)) * rng.uniform(0.1, 3, size=n)
    return EnsembleSnapshots(data, sched, NoiseSpec(1.0, 0, P), "random", np.zeros(n))


def test_full_basis_has_zero_error():
    ens = random_ensemble(np.random.default_rng(0))
    rho = principal_basis(snapshot_summed_gramian(ens), 3)
    assert projection_error(ens, rho) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_trace_identity(seed, k):
    ens = random_ensemble(np.random.default_rng(seed))
    G = snapshot_summed_gramian(ens).matrix
    rho = principal_basis(G, k).basis
    lhs = projection_error(ens, rho) + np.trace(rho.T @ G @ rho)
    assert lhs == pytest.approx(np.trace(G), rel=1e-9)


def test_principal_basis_beats_random_bases():
    ens = random_ensemble(np.random.default_rng(1))
    G = snapshot_summed_gramian(ens)
    best = projection_error(ens, principal_basis(G, 2))
    rng = np.random.default_rng(2)
    for _ in range(100):
        Q = ortho_group.rvs(3, random_state=rng)[:, :2]
        assert projection_error(ens, Q) >= best - 1e-12


def test_basis_row_count_checked():
    ens = random_ensemble(np.random.default_rng(0))
    with pytest.raises(ConfigurationError, match="3 rows"):
        projection_error(ens, np.eye(2))


# directional reach

@pytest.fixture(scope="module")
def lin_ens():
    m = build_linear([[-1.0, 0.4], [0.0, -2.0]], [[1.0], [0.7]], [0, 0])
    return simulate_ensemble(m, NoiseSpec(0.5, 3, 2000), SnapshotSchedule.from_times([1.0], 0.01))


def test_reach_at_principal_direction(lin_ens):
    G = empirical_gibbs_gramian(lin_ens, 1.0)
    b = principal_basis(G, 2)
    assert directional_reach_score(lin_ens, b.basis[:, 0], 1.0) == pytest.approx(
        b.eigenvalues[0], abs=1e-10)
    assert directional_reach_score(lin_ens, b.basis[:, 1], 1.0) == pytest.approx(
        b.eigenvalues[1], abs=1e-10)


def test_reach_bounded_by_spectrum(lin_ens):
    lam = principal_basis(empirical_gibbs_gramian(lin_ens, 1.0), 1).eigenvalues
    rng = np.random.default_rng(4)
    for _ in range(500):
        e = rng.normal(size=2)
        e /= np.linalg.norm(e)
        s = directional_reach_score(lin_ens, e, 1.0)
        assert lam[1] - 1e-10 <= s <= lam[0] + 1e-10


def test_reach_normalizes_with_warning(lin_ens):
    with pytest.warns(UserWarning, match="normalizing"):
        s = directional_reach_score(lin_ens, np.array([2.0, 0.0]), 1.0)
    assert s == pytest.approx(directional_reach_score(lin_ens, np.array([1.0, 0.0]), 1.0))


# Galerkin reduction

def test_linear_reduction_is_exact():
    A = np.array([[-1.0, 0.3, 0.0], [0.2, -2.0, 0.1], [0.0, 0.4, -0.5]])
    B = np.array([[1.0], [0.0], [2.0]])
    m = build_linear(A, B, [1.0, 2.0, 3.0])
    rho = principal_basis(np.diag([3.0, 2.0, 1.0]) + 0.1, 2)
    red = galerkin_reduce(m, rho)
    R = rho.basis
    np.testing.assert_array_equal(red.linear.A, R.T @ A @ R)
    np.testing.assert_array_equal(red.linear.B, R.T @ B)
    np.testing.assert_allclose(red.initial_state, R.T @ m.initial_state, rtol=1e-15)
    z = np.array([0.3, -0.7])
    np.testing.assert_allclose(red.drift(z), R.T @ A @ R @ z, rtol=1e-13)


def test_identity_basis_reproduces_model():
    m = build_fhn(2, [[0, 0.1], [0.1, 0]], x0=[-1, 0, 0, 2])
    red = galerkin_reduce(m, np.eye(4))
    pts = m.probe_points()
    np.testing.assert_allclose(red.drift(pts), m.drift(pts), rtol=1e-15, atol=1e-15)
    np.testing.assert_array_equal(red.lift(red.initial_state), m.initial_state)


def test_reduced_state_dependent_gain():
    m = build_expression(["-x1 + x2", "x1*x2"], [["1 + x2^2"], ["x1"]], [0.5, 0.5])
    R = np.array([[0.6], [0.8]])
    red = galerkin_reduce(m, R)
    z = np.array([[0.5], [-1.0]])
    x = z @ R.T
    np.testing.assert_allclose(red.drift(z), m.drift(x) @ R, rtol=1e-14)
    np.testing.assert_allclose(red.input_gain(z), np.einsum("ki,pim->pkm", R.T, m.input_gain(x)),
                               rtol=1e-14)


@pytest.fixture(scope="module")
def fhn_tracking(fhn_runs):
    run = fhn_runs.get(T_LOW, 1)
    cfg = FhnExperimentConfig(temperature=T_LOW, seed=1)
    model = cfg.model()
    sched = SnapshotSchedule.from_range(0.1, 0.1, 100, cfg.dt)
    R = run.basis.basis
    z = deterministic_trajectory(galerkin_reduce(model, run.basis), sched).data[0]
    mean = simulate_ensemble(model, cfg.noise(), sched).data.mean(axis=0)
    return R, z @ R.T, mean


def test_tracking_error_cannot_beat_projection_floor(fhn_tracking):
    # any trajectory inside span(rho) is at least as far from the mean as its
    # orthogonal projection
    R, lifted, mean = fhn_tracking
    err = np.linalg.norm(lifted - mean) / np.linalg.norm(mean)
    floor = np.linalg.norm(mean - mean @ R @ R.T) / np.linalg.norm(mean)
    assert err >= floor


@pytest.mark.xfail(strict=True, reason="the snapshot mean lies about 40% outside the two-dimensional "
                                       "principal subspace, so no reduced trajectory can track it to 15%")
def test_reduced_network_tracks_snapshot_means(fhn_tracking):
    _, lifted, mean = fhn_tracking
    assert np.linalg.norm(lifted - mean) / np.linalg.norm(mean) < 0.15
