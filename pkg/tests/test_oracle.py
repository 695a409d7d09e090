import itertools

import numpy as np
import pytest

from mfstackelberg import oracle
from mfstackelberg.model import scenario_c0, scenario_example

DELTA = 1e-3
SLACK = 1e-12


def test_one_step_hand_case():
    sol = oracle.solve_tree(scenario_c0(), 1)
    np.testing.assert_allclose(sol.root, (-0.2, -0.2, -0.2), atol=1e-12)
    assert sol.J[0] == pytest.approx(-0.1, abs=1e-12)


def test_follower_reaction_one_step():
    tree = oracle.build_tree(scenario_c0(), 1)
    v1, v2 = oracle.solve_followers_nash(tree, np.array([0.3]))
    assert v1[0] == pytest.approx(-0.325, abs=1e-12) and v2[0] == pytest.approx(-0.325, abs=1e-12)


def test_node_probabilities_sum_to_one():
    tree = oracle.build_tree(scenario_example(0.4), 3)
    children: dict[int, float] = {}
    for node in tree.nodes():
        if node.parent is not None:
            children[node.parent] = children.get(node.parent, 0.0) + node.prob
    for total in children.values():
        assert total == pytest.approx(1.0, abs=1e-15)


def test_one_step_tree_shape():
    nodes = list(oracle.build_tree(scenario_c0(0.2), 1).nodes())
    assert [n.branch for n in nodes] == [None, oracle.DEFAULT, oracle.UP, oracle.DOWN]
    assert [n.prob for n in nodes] == pytest.approx([1.0, 0.2, 0.4, 0.4])


def test_size_guard():
    with pytest.raises(oracle.TreeError):
        oracle.build_tree(scenario_c0(), oracle.MAX_STEPS + 1)
    with pytest.raises(oracle.TreeError):
        oracle.build_tree(scenario_c0(5.0), 2)


@pytest.mark.parametrize("gamma, n", [(0.0, 2), (0.4, 3)])
def test_direct_objective_matches_assembled_qp(gamma, n):
    sol = oracle.solve_tree(scenario_example(gamma), n)
    direct = oracle.tree_objective(sol.tree, (sol.v0, sol.v1, sol.v2), sol.subgames)
    np.testing.assert_allclose(direct, sol.J, atol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exhaustive_nash_perturbation(n):
    sol = oracle.solve_tree(scenario_example(0.4), n)
    tree = sol.tree
    base = [sol.v0, sol.v1, sol.v2]
    for player, j, sign in itertools.product((1, 2), range(tree.n_nodes), (1, -1)):
        ctrl = [c.copy() for c in base]
        ctrl[player][j] += sign * DELTA
        assert oracle.tree_objective(tree, ctrl, sol.subgames)[player] <= sol.J[player] + SLACK


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exhaustive_leader_perturbation(n):
    sol = oracle.solve_tree(scenario_example(0.4), n)
    tree = sol.tree
    for j, sign in itertools.product(range(tree.n_nodes), (1, -1)):
        v0 = sol.v0.copy()
        v0[j] += sign * DELTA
        resp = sol.response(v0)
        ctrl = (v0, resp[:tree.n_nodes], resp[tree.n_nodes:])
        assert oracle.tree_objective(tree, ctrl, sol.subgames)[0] <= sol.J[0] + SLACK


def test_mean_conventions_coincide_without_exit():
    surv, literal = oracle.mean_conventions(oracle.solve_tree(scenario_example(0.0), 3))
    np.testing.assert_array_equal(surv, literal)


def test_report_columns():
    rows = oracle.compare((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), scenario_c0(), steps=(1, 2))
    header = oracle.report_csv(rows).splitlines()[0].split(",")
    assert header[:3] == ["n_steps", "v0_root_tree", "v0_root_cont"]
    assert len(rows) == 2 and rows[0].n_steps == 1
