import numpy as np
import pytest

from mfstackelberg.model import random_spec, scenario_c0, scenario_example
from mfstackelberg.stage2 import (compute_kappa, follower2_feedback, phi_residual, solve_moments, solve_stage2)


@pytest.fixture(scope="module")
def example():
    spec = scenario_example(0.4)
    s2 = solve_stage2(spec, spec.grid(400))
    return spec, s2


def test_c0_closed_forms():
    spec = scenario_c0()
    s2 = solve_stage2(spec, spec.grid(200))
    t = s2.grid.nodes
    np.testing.assert_allclose(s2.phi_sum1.values[:, 0], -1 / (2 - t), atol=1e-10)
    np.testing.assert_allclose(s2.phi11.values[:, 0], -0.5 / (2 - t), atol=1e-10)
    np.testing.assert_allclose(s2.phi12.values[:, 0], 0.0, atol=1e-10)


def test_terminal_values(example):
    spec, s2 = example
    np.testing.assert_array_equal(s2.phi.values[-1], [-spec.r1_T, -spec.r2_T, 0.0, 0.0])


def test_individual_equations_add_up(example):
    _, s2 = example
    phi = s2.phi.values
    np.testing.assert_allclose(phi[:, 0] + phi[:, 1], s2.phi_sum1.values[:, 0], atol=1e-10)
    np.testing.assert_allclose(phi[:, 2] + phi[:, 3], s2.phi_sum2.values[:, 0], atol=1e-10)


def test_residual_shrinks_with_grid():
    spec = scenario_example()
    coarse = phi_residual(spec, solve_stage2(spec, spec.grid(100)))
    fine = phi_residual(spec, solve_stage2(spec, spec.grid(400)))
    assert fine < coarse / 50


def test_kappa_methods_converge_together():
    spec = scenario_example(0.4)
    gaps = []
    for n in (200, 400):
        s2 = solve_stage2(spec, spec.grid(n))
        a = compute_kappa(spec, s2, "sweep").kappa.values
        b = compute_kappa(spec, s2, "per_tau").kappa.values
        gaps.append(np.abs(a - b).max())
    assert gaps[1] < 1e-6 and gaps[0] / gaps[1] > 3.5


def test_kappa_endpoint_and_sign(example):
    spec, s2 = example
    kap = compute_kappa(spec, s2)
    assert kap.kappa_i1(1, spec.T) == -spec.r1_T and kap.kappa_i1(2, spec.T) == -spec.r2_T
    assert np.all(kap.kappa.values < 0)


def test_moments_jensen(example):
    spec, s2 = example
    m = solve_moments(spec, s2, 0.25)
    assert m.m_bar.values[0, 0] == 1.0
    assert np.all(m.m2.values >= m.m_bar.values ** 2)


def test_sign_invariants_on_random_specs():
    rng = np.random.default_rng(3)
    for _ in range(10):
        spec = random_spec(rng, example_case=False)
        s2 = solve_stage2(spec, spec.grid(100))
        assert np.all(s2.phi.values[:, :2] < 0)
        assert np.all(compute_kappa(spec, s2).kappa.values < 0)


def test_feedback_is_linear(example):
    spec, s2 = example
    u1 = np.array(follower2_feedback(s2, spec, 0.5, 1.0, 0.5))
    u2 = np.array(follower2_feedback(s2, spec, 0.5, 2.0, 1.0))
    np.testing.assert_allclose(u2, 2 * u1)
