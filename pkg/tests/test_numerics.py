import numpy as np
import pytest

from mfstackelberg.numerics import (DomainError, FunctionTable, IntegrationBlowup, TimeGrid, integrate_ode,
                                    node_derivatives, quadrature)


def test_rk4_fourth_order():
    errs = []
    for n in (10, 20, 40):
        tab = integrate_ode(lambda t, y: -y * y, [1.0], TimeGrid(0.0, 1.0, n))
        errs.append(abs(tab.values[-1, 0] - 0.5))
    assert errs[0] / errs[1] > 14 and errs[1] / errs[2] > 14


def test_backward_integration_starts_at_right_end():
    tab = integrate_ode(lambda t, y: y, [np.e], TimeGrid(0.0, 1.0, 200), "backward")
    assert tab.values[-1, 0] == np.e
    assert abs(tab.values[0, 0] - 1.0) < 1e-9


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_is_reported_with_time():
    with pytest.raises(IntegrationBlowup) as exc:
        integrate_ode(lambda t, y: y ** 3, [10.0], TimeGrid(0.0, 1.0, 10), label="cubic")
    assert "cubic" in str(exc.value)


def test_interpolation_is_cubic_accurate():
    g = TimeGrid(0.0, 1.0, 50)
    tab = integrate_ode(lambda t, y: np.cos(t) * np.ones(1), [0.0], g)
    assert abs(tab(0.3137)[0] - np.sin(0.3137)) < 1e-8
    with pytest.raises(DomainError):
        tab(1.5)


def test_quadrature_partial_cells():
    g = TimeGrid(0.0, 2.0, 400)
    tab = FunctionTable(g, np.exp(g.nodes))
    assert abs(quadrature(tab, 0.1234, 1.789) - (np.exp(1.789) - np.exp(0.1234))) < 1e-4
    assert quadrature(tab, 1.0, 0.5) == pytest.approx(-quadrature(tab, 0.5, 1.0))


def test_node_derivatives_respect_breaks():
    g = TimeGrid(0.0, 1.0, 20)
    v = np.where(g.nodes < 0.5, g.nodes ** 2, 3 * g.nodes - 1.25)[:, None]
    dl, dr = node_derivatives(v, g, breaks=(0.5,))
    k = g.index_of(0.5)
    # at the kink the left stencil sees only the parabola, the right one only the line
    assert dl[k, 0] == pytest.approx(1.0, abs=1e-9)
    assert dr[k, 0] == pytest.approx(3.0, abs=1e-9)
