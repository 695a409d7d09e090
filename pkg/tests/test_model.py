from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfstackelberg.model import (ConfigError, IntensitySpec, check_aligned, dump_spec, load_spec, random_spec,
                                 scenario_c0, scenario_example, survival_function, validate_spec)


def test_round_trip():
    spec = scenario_example(0.4)
    assert load_spec(dump_spec(spec)) == spec


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_specs_valid_and_round_trip(seed):
    spec = random_spec(np.random.default_rng(seed))
    assert validate_spec(spec).ok
    assert load_spec(dump_spec(spec)) == spec


def test_ratio_condition_violation_reported():
    spec = scenario_example()
    bad = replace(spec, stage1=replace(spec.stage1, q2=0.3))
    rep = validate_spec(bad)
    assert not rep.ok and rep.violations[0][0] == "C"


def test_nonpositive_weight_rejected():
    rep = validate_spec(scenario_c0().with_leader(q0=0.0))
    assert any(a == "B" for a, _ in rep.violations)


def test_bad_number_names_key_and_line():
    text = dump_spec(scenario_c0()).replace("x0 = 1.0", "x0 = oops")
    with pytest.raises(ConfigError) as exc:
        load_spec(text)
    assert exc.value.key == "x0" and exc.value.line == 3


@pytest.mark.parametrize("text", ["T = 1\n", "[horizon]\nT = 1\n", "[horizon]\nT 1\n"])
def test_malformed_configs(text):
    with pytest.raises(ConfigError):
        load_spec(text)


def test_piecewise_intensity():
    it = IntensitySpec.piecewise((0.0, 0.5), (0.2, 1.0))
    assert it.rate(0.49) == 0.2 and it.rate(0.5) == 1.0
    assert it.cumulative(1.0) == pytest.approx(0.6)
    e = np.array([0.05, 0.1, 0.35, 0.6])
    np.testing.assert_allclose(it.cumulative(it.inverse_cumulative(e)), e)


def test_zero_intensity_never_exits():
    it = IntensitySpec.constant(0.0)
    assert np.all(np.isinf(it.inverse_cumulative(np.array([0.1, 3.0]))))


def test_grid_alignment():
    spec = scenario_example().with_intensity(IntensitySpec.piecewise((0.0, 0.3), (0.1, 0.4)))
    check_aligned(spec, 10)
    with pytest.raises(ConfigError):
        check_aligned(spec, 4)


def test_survival_function():
    spec = scenario_example(0.4)
    S = survival_function(spec.intensity, spec.grid(10))
    np.testing.assert_allclose(S.values[:, 0], np.exp(-0.4 * spec.grid(10).nodes))
