import numpy as np
import pytest

from mfstackelberg.model import IntensitySpec, scenario_c0, scenario_example
from mfstackelberg.numerics import TimeGrid
from mfstackelberg.pipeline import solve_equilibrium
from mfstackelberg.simulate import (estimate_objectives, follower_variant, jump_nodes, leader_variant,
                                    paths_csv, piecewise_direction, sample_default_time, sim_coefficients,
                                    simulate_paths)


@pytest.fixture(scope="module")
def example():
    return solve_equilibrium(scenario_example(0.4), 512)


def test_jump_at_first_node_not_before_default():
    g = TimeGrid(0.0, 1.0, 4)
    tau = np.array([0.0, 0.1, 0.25, 0.26, 1.0, 1.5, np.inf])
    np.testing.assert_array_equal(jump_nodes(tau, g), [0, 1, 1, 2, 4, -1, -1])


def test_default_time_distribution():
    it = IntensitySpec.piecewise((0.0, 0.5), (0.4, 1.2))
    tau = sample_default_time(it, np.random.default_rng(0), 200_000)
    for t in (0.25, 0.5, 1.0):
        assert abs(np.mean(tau > t) - np.exp(-it.cumulative(t))) < 4e-3


def test_zero_perturbation_changes_nothing(example):
    eta = piecewise_direction(np.random.default_rng(1), 1.0)
    co = sim_coefficients(example, 64)
    b = simulate_paths(example, 5000, 64, 3, [follower_variant(1, eta, 0.0, 64),
                                               leader_variant(example, co, eta, 0.0)], coefficients=co)
    np.testing.assert_array_equal(b.J[:, 1], b.J[:, 0])
    np.testing.assert_array_equal(b.J[:, 2], b.J[:, 0])


def test_worker_count_does_not_change_results(example):
    a = simulate_paths(example, 10_000, 32, 5, workers=1, n_record=3)
    b = simulate_paths(example, 10_000, 32, 5, workers=3, n_record=3)
    np.testing.assert_array_equal(a.J, b.J)
    assert paths_csv(a) == paths_csv(b)


def test_objectives_match_moment_equations(example):
    est = estimate_objectives(simulate_paths(example, 50_000, 256, 9))
    exact = example.values()
    for j, (m, se) in enumerate(zip(est.means, est.ses)):
        assert abs(m - (exact.J0, exact.J1, exact.J2)[j]) < 4 * se


def test_deterministic_scenario_is_euler_exact():
    eq = solve_equilibrium(scenario_c0(), 400)
    est = estimate_objectives(simulate_paths(eq, 100, 50, 0))
    np.testing.assert_allclose(est.means, (-0.1, -0.06, -0.06), atol=1e-6)
    assert max(est.ses) < 1e-12


def test_recorded_paths_start_at_initial_state(example):
    b = simulate_paths(example, 100, 16, 2, n_record=2)
    lines = paths_csv(b).splitlines()
    assert lines[0].startswith("t,path_id,X")
    assert float(lines[1].split(",")[2]) == example.spec.x0
