import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cransparse import (SolverDivergenceError, SolverSettings, build_graph, count_ops,
                        dense_model, detect)
from cransparse.rgmp import DetectionReport, MessageState

from conftest import crandn, dominant_instance
from test_mmse import direct_mmse

TIGHT = SolverSettings(stop_threshold=1e-8, max_iterations=200)


def test_count_ops_values():
    assert count_ops(64, 8192, 2) == 2_097_152
    assert count_ops(64, 7168, 2) == 1_835_008
    assert count_ops(64, 0, 7) == 0
    with pytest.raises(ValueError):
        count_ops(-1, 1, 1)


@given(st.integers(0, 500), st.integers(0, 10_000), st.integers(0, 1000))
def test_count_ops_formula(k, s, i):
    assert count_ops(k, s, i) == 2 * k * s * i


def test_report_enforces_op_count():
    with pytest.raises(AssertionError):
        DetectionReport(np.zeros(2), np.ones(2), iterations=1, op_count=5, converged=True,
                        n_edges=2)


def test_graph_dense_full(full_channel):
    graph = build_graph(dense_model(full_channel, 1.0), 1.0)
    assert graph.n_edges == 8192
    assert (graph.n_antennas, graph.n_users) == (128, 64)


def test_graph_diagonal():
    graph = build_graph((np.eye(4), 1.0), 1.0)
    assert graph.n_edges == 4
    np.testing.assert_array_equal(graph.edge_antenna, graph.edge_user)


def test_graph_rejects_bad_noise():
    with pytest.raises(ValueError):
        build_graph((np.eye(2), 0.0), 1.0)


def test_empty_graph_returns_prior():
    graph = build_graph((np.zeros((3, 2)), 1.0), 1.0)
    assert graph.n_edges == 0
    report = detect(graph, np.ones(3))
    np.testing.assert_array_equal(report.posterior_means, 0)
    np.testing.assert_array_equal(report.posterior_variances, 1)
    assert report.op_count == 0 and report.converged


def test_diagonal_one_sweep():
    report = detect(build_graph((np.eye(2), 1.0), 1.0), np.array([2.0, 0.0]))
    np.testing.assert_allclose(report.posterior_means, [1.0, 0.0])
    assert report.iterations == 1
    assert report.converged
    assert report.op_count == 2 * 2 * 2 * 1


def test_isolated_user_keeps_prior(rng):
    H = crandn(rng, 4, 3)
    H[:, 1] = 0
    report = detect(build_graph((H, 1.0), 1.0), crandn(rng, 4), TIGHT)
    assert report.posterior_means[1] == 0
    assert report.posterior_variances[1] == 1


def test_matches_mmse_oracle(rng):
    for i in range(20):
        H, y = dominant_instance(rng)
        report = detect(build_graph((H, 1.0), 1.0), y,
                        SolverSettings(stop_threshold=1e-8, max_iterations=200, schedule_seed=i))
        want = direct_mmse(H, 1.0, 1.0, y)
        assert report.converged
        assert np.linalg.norm(report.posterior_means - want) <= 1e-4 * np.linalg.norm(want)


def test_per_branch_noise_oracle(rng):
    H, y = dominant_instance(rng)
    noise = rng.uniform(0.5, 2.0, size=8)
    report = detect(build_graph((H, noise), 1.5), y, TIGHT)
    want = np.sqrt(1.5) * H.conj().T @ np.linalg.solve(
        1.5 * H @ H.conj().T + np.diag(noise), y)
    np.testing.assert_allclose(report.posterior_means, want, rtol=1e-5, atol=1e-7)


def test_posterior_variances_bounded(rng):
    H, y = dominant_instance(rng)
    report = detect(build_graph((H, 1.0), 1.0), y, TIGHT)
    assert np.all(report.posterior_variances > 0)
    assert np.all(report.posterior_variances <= 1)


def test_deterministic(rng):
    H, y = dominant_instance(rng)
    graph = build_graph((H, 1.0), 1.0)
    a = detect(graph, y, SolverSettings(schedule_seed=4))
    b = detect(graph, y, SolverSettings(schedule_seed=4))
    np.testing.assert_array_equal(a.posterior_means, b.posterior_means)
    assert a.iterations == b.iterations


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_schedule_invariance_at_fixed_point(rng, seed):
    H, y = dominant_instance(rng)
    graph = build_graph((H, 1.0), 1.0)
    fixed = detect(graph, y, SolverSettings(stop_threshold=1e-12, max_iterations=500))
    again = detect(graph, y, SolverSettings(max_iterations=1, schedule_seed=seed),
                   initial_state=fixed.state)
    change = np.abs(again.posterior_means - fixed.posterior_means)
    assert np.all(change / np.maximum(np.abs(fixed.posterior_means), 1e-12) < 0.01)
    assert again.converged and again.iterations == 1


def test_damping_reaches_same_fixed_point(rng):
    H, y = dominant_instance(rng)
    report = detect(build_graph((H, 1.0), 1.0), y,
                    SolverSettings(stop_threshold=1e-10, max_iterations=1000, damping=0.5))
    np.testing.assert_allclose(report.posterior_means, direct_mmse(H, 1.0, 1.0, y), rtol=1e-6)


def test_max_iterations_not_converged(rng):
    H, y = dominant_instance(rng)
    report = detect(build_graph((H, 1.0), 1.0), y,
                    SolverSettings(stop_threshold=1e-15, max_iterations=2))
    assert report.iterations == 2 and not report.converged


def test_non_finite_message_raises():
    graph = build_graph((np.eye(2) + 0.1, 1.0), 1.0)
    with pytest.raises(SolverDivergenceError) as info:
        detect(graph, np.array([np.inf, 1.0]))
    assert info.value.iteration == 1


def test_observation_length_checked():
    with pytest.raises(ValueError):
        detect(build_graph((np.eye(2), 1.0), 1.0), np.zeros(3))


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(stop_threshold=0)
    with pytest.raises(ValueError):
        SolverSettings(damping=1.0)


def test_initial_state_shape_checked():
    graph = build_graph((np.eye(2), 1.0), 1.0)
    with pytest.raises(ValueError):
        detect(graph, np.zeros(2), initial_state=MessageState(np.zeros(3), np.ones(3)))


def test_full_scenario_converges_near_mmse(full_layout, full_channel, rng):
    H = full_channel.entries
    n0 = full_layout.noise_power
    y = H @ crandn(rng, 64) + np.sqrt(n0) * crandn(rng, 128)
    report = detect(build_graph(dense_model(H, n0), 1.0), y)
    assert report.converged
    assert report.op_count == 2 * 64 * 8192 * report.iterations
    want = direct_mmse(H, 1.0, n0, y)
    assert np.linalg.norm(report.posterior_means - want) < 0.01 * np.linalg.norm(want)
