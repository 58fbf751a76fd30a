import numpy as np
import pytest

from bellforge.core.errors import NumericalFailure
from bellforge.models.simplex import solve_standard_form


def test_small_lp_optimum():
    # min -x - y  s.t.  x + 2y <= 4, 3x + y <= 6
    A = np.array([[1.0, 2.0, 1.0, 0.0], [3.0, 1.0, 0.0, 1.0]])
    b = np.array([4.0, 6.0])
    c = np.array([-1.0, -1.0, 0.0, 0.0])
    res = solve_standard_form(c, A, b)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-2.8, abs=1e-12)
    np.testing.assert_allclose(res.x[:2], [1.6, 1.2], atol=1e-12)


def test_infeasible_returns_farkas_ray():
    A = np.array([[1.0, 1.0]])
    b = np.array([-1.0])
    res = solve_standard_form(np.zeros(2), A, b)
    assert res.status == "infeasible"
    y = res.farkas
    assert np.all(y @ A <= 1e-9)
    assert y @ b > 0
    assert res.infeasibility == pytest.approx(1.0)


def test_unbounded():
    res = solve_standard_form(np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))
    assert res.status == "unbounded"
    assert res.x is None


def test_redundant_rows_are_dropped():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    res = solve_standard_form(np.array([1.0, 2.0]), A, np.array([1.0, 2.0]))
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-12)
    assert res.objective == pytest.approx(1.0)


def test_feasibility_only():
    A = np.array([[1.0, 1.0, 1.0]])
    res = solve_standard_form(None, A, np.array([1.0]))
    assert res.status == "optimal"
    assert res.x.min() >= 0.0
    assert res.x.sum() == pytest.approx(1.0)


def test_iteration_limit():
    A = np.array([[1.0, 2.0, 1.0, 0.0], [3.0, 1.0, 0.0, 1.0]])
    with pytest.raises(NumericalFailure, match="iteration limit"):
        solve_standard_form(np.array([-1.0, -1.0, 0.0, 0.0]), A, np.array([4.0, 6.0]), max_iterations=1)
