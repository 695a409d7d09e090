from dataclasses import replace

import numpy as np

from mfstackelberg import verify
from mfstackelberg.model import scenario_c0, scenario_example
from mfstackelberg.pipeline import solve_equilibrium

SMALL = verify.Budget(grid_n=400, paths=20_000, directions=4, negative_paths=5_000, negative_directions=2)


def test_suite_stops_after_validation_failure():
    spec = scenario_example()
    bad = replace(spec, stage2=replace(spec.stage2, q1=7.0))
    out = verify.run_suite(bad, SMALL)
    assert len(out) == 1 and not out[0].passed and "(C)" in out[0].detail


def test_reduction_skipped_with_exit():
    o = verify.reduction_test_gamma_zero(scenario_example(0.4))
    assert o.skipped and o.status == "skipped"


def test_reduction_with_inactive_jump_coefficient():
    spec = scenario_example(0.0)
    assert spec.leader.d0 != 0
    assert verify.reduction_test_gamma_zero(spec, 400).passed


def test_zero_step_perturbation_is_exactly_zero():
    eq = solve_equilibrium(scenario_example(0.4), 256)
    for player in (0, 1):
        det = verify.perturbation_estimates(eq, player, 2, 0.0, 2000, 1, n_steps=32)
        np.testing.assert_array_equal(det.dJ, 0.0)


def test_corrupted_gain_detected():
    eq = solve_equilibrium(scenario_example(0.4), 256)
    assert verify.negative_control(eq, "f1", replace(SMALL, sim_steps=32)).passed


def test_c0_suite_passes_and_is_reproducible():
    a = verify.run_suite(scenario_c0(), SMALL)
    assert verify.suite_passed(a), verify.summary(a)
    b = verify.run_suite(scenario_c0(), SMALL)
    assert verify.report_csv(a) == verify.report_csv(b)
    ids = [o.check_id for o in a]
    assert ids.index("model.validation") < ids.index("stage2.invariants") < ids.index("perturbation.leader") \
        < ids.index("martingale")
