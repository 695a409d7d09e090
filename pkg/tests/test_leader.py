from dataclasses import replace

import numpy as np
import pytest

from mfstackelberg.leader import RestrictionError, check_restriction, reference_riccati, riccati_residual
from mfstackelberg.model import scenario_c0, scenario_example
from mfstackelberg.pipeline import solve_equilibrium
from mfstackelberg.stage1 import PINNED


@pytest.fixture(scope="module")
def c0():
    return solve_equilibrium(scenario_c0(), 400)


def test_c0_root_controls_and_values(c0):
    np.testing.assert_allclose(c0.leader.root_controls(), (-0.2, -0.2, -0.2), atol=1e-10)
    v = c0.values()
    np.testing.assert_allclose((v.J0, v.J1, v.J2), (-0.1, -0.06, -0.06), atol=1e-9)


def test_matches_adaptive_reference_without_exit():
    spec = scenario_example(0.0).with_leader(d0=0.0)
    eq = solve_equilibrium(spec, 400)
    ref = reference_riccati(spec, eq.grid.nodes)
    assert np.max(np.abs(ref - eq.leader.table.values)) < 1e-8


def test_riccati_residual_small():
    eq = solve_equilibrium(scenario_example(0.4), 800)
    assert riccati_residual(eq.leader).values.max() < 1e-6


def test_terminal_condition():
    spec = scenario_example(0.4)
    eq = solve_equilibrium(spec, 200)
    expected = np.diag([-spec.leader.r0, 0.0, 0.0])
    np.testing.assert_array_equal(eq.leader.G(spec.T), expected)
    np.testing.assert_array_equal(eq.leader.G_hat(spec.T), expected)


def test_symmetry():
    eq = solve_equilibrium(scenario_example(0.4), 200)
    for t in (0.0, 0.37, 1.0):
        G = eq.leader.G(t)
        np.testing.assert_allclose(G, G.T, atol=1e-12)


def test_restriction_enforced():
    spec = scenario_example()
    bad = replace(spec, stage1=replace(spec.stage1, a_bar=0.2))
    with pytest.raises(RestrictionError):
        check_restriction(bad)
    with pytest.raises(RestrictionError):
        check_restriction(spec.with_leader(d0_bar=0.1))


def test_pinned_mode_skips_leader():
    eq = solve_equilibrium(scenario_example(), 200, stage1_mode=PINNED)
    assert eq.leader is None
    with pytest.raises(ValueError):
        eq.values()
