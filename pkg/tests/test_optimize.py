import numpy as np
import pytest

from spatialspec import AllEvaluationsFailed, InvalidArgument, OptimizeOptions, ParamSpace
from spatialspec.optimize import minimize_box


def test_quadratic_interior():
    res = minimize_box(lambda x: (x[0] - 0.3) ** 2 + 2 * (x[1] + 0.1) ** 2, ParamSpace([-1, -1], [1, 1]))
    np.testing.assert_allclose(res.x, [0.3, -0.1], atol=1e-5)
    assert res.converged


def test_minimum_on_boundary():
    res = minimize_box(lambda x: (x[0] - 2.0) ** 2, ParamSpace([-1], [1]))
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)
    assert ParamSpace([-1], [1]).at_boundary(res.x)


def test_multimodal_finds_global():
    f = lambda x: np.sin(5 * x[0]) + 0.1 * x[0] ** 2
    res = minimize_box(f, ParamSpace([-3], [3]))
    grid = np.linspace(-3, 3, 20001)
    assert res.fun <= f([grid[np.argmin([f([g]) for g in grid])]]) + 1e-9


def test_fixed_components():
    space = ParamSpace([0.5, -1], [0.5, 1])
    res = minimize_box(lambda x: (x[0] - x[1]) ** 2, space)
    assert res.x[0] == 0.5 and res.x[1] == pytest.approx(0.5, abs=1e-5)


def test_all_fixed():
    res = minimize_box(lambda x: float(x @ x), ParamSpace.fixed([1.0, 2.0]))
    assert res.fun == 5.0 and res.nfev == 1


def test_log_scale_component():
    space = ParamSpace([1e-3], [1e3], log_scale=[True])
    res = minimize_box(lambda x: (np.log(x[0]) - np.log(25.0)) ** 2, space)
    assert res.x[0] == pytest.approx(25.0, rel=1e-5)


def test_infeasible_points_skipped():
    f = lambda x: np.inf if x[0] > 0.2 else (x[0] - 0.1) ** 2
    res = minimize_box(f, ParamSpace([-1], [1]))
    assert res.x[0] == pytest.approx(0.1, abs=1e-5)


def test_all_infeasible():
    with pytest.raises(AllEvaluationsFailed):
        minimize_box(lambda x: np.inf, ParamSpace([-1], [1]))


def test_high_dimensional_uses_sobol():
    opts = OptimizeOptions(trace=True)
    target = np.array([0.1, -0.2, 0.3, 0.0])
    res = minimize_box(lambda x: float(np.sum((x - target) ** 2)), ParamSpace(-np.ones(4), np.ones(4)), opts)
    np.testing.assert_allclose(res.x, target, atol=1e-4)
    assert len(res.trace) == res.nfev


def test_bad_bounds():
    with pytest.raises(InvalidArgument):
        ParamSpace([1.0], [0.0])
    with pytest.raises(InvalidArgument):
        ParamSpace([0.0], [1.0], log_scale=[True])
