import numpy as np

from mfstackelberg.model import scenario_example
from mfstackelberg.stage1 import solve_psi_compensated, solve_psi_pinned
from mfstackelberg.stage2 import compute_kappa, solve_stage2


def _setup(gamma, n=400):
    spec = scenario_example(gamma)
    g = spec.grid(n)
    s2 = solve_stage2(spec, g)
    return spec, g, compute_kappa(spec, s2)


def test_compensated_equals_pinned_without_exit():
    spec, g, kap = _setup(0.0)
    comp = solve_psi_compensated(spec, kap, g)
    pin = solve_psi_pinned(spec, kap, spec.T, g)
    np.testing.assert_array_equal(comp.psi.values, pin.psi.values)


def test_terminal_value_is_continuation_value():
    spec, g, kap = _setup(0.4)
    comp = solve_psi_compensated(spec, kap, g)
    np.testing.assert_array_equal(comp.psi.values[-1], [*kap.kappa.values[-1], 0.0, 0.0])


def test_large_intensity_tracks_kappa():
    spec, g, kap = _setup(1000.0, n=4000)
    comp = solve_psi_compensated(spec, kap, g)
    rel = np.abs(comp.psi.values[:, :2] / kap.kappa.values - 1)
    assert rel.max() < 5e-3


def test_pinned_grid_and_watermark():
    spec, g, kap = _setup(0.4)
    pin = solve_psi_pinned(spec, kap, 0.5, g)
    assert pin.grid.t1 == 0.5 and pin.grid.n == 200
    assert pin.mode_label == "pinned(diagnostic)"
    assert pin.to_csv().splitlines()[1].endswith("pinned(diagnostic)")
