import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.dispatch import build_dispatch, global_set, local_problems
from src.errors import DimensionError, InvalidSchedule
from src.problem import (
    StepSizeSchedule,
    alpha,
    constant_problem,
    corner_gradient_bounds,
    estimate_gradient_bounds,
    finite_difference_gradient,
    global_lagrangian,
    grad_mu_lagrangian,
    grad_x_lagrangian,
    lagrangian,
    stack_duals,
)
from src.projections import ScaledSimplex


@pytest.fixture
def unit_generator():
    """One generator with a = 1, b = c = 0 and limits [0, 2], plus a partner so d = 2."""
    inst = build_dispatch(2, [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], 2.0, [0.0, 0.0], [2.0, 2.0])
    return local_problems(inst, 10.0)[0]


def test_lagrangian_with_zero_multiplier_is_cost(unit_generator):
    x = np.array([1.0, 1.0])
    assert lagrangian(unit_generator, x, np.zeros(2)) == pytest.approx(unit_generator.cost(x))
    assert lagrangian(unit_generator, x, np.zeros(2)) == pytest.approx(1.0)


def test_lagrangian_adds_multiplier_terms(unit_generator):
    x = np.array([0.5, 1.5])
    # 0.25 + 2 * (0 - 0.5) + 3 * (0.5 - 2)
    assert lagrangian(unit_generator, x, np.array([2.0, 3.0])) == pytest.approx(0.25 - 1.0 - 4.5)


def test_global_lagrangian_is_additive():
    inst = build_dispatch(3, [1.0, 0.5, 2.0], [1.0, -2.0, 0.0], [0.0, 1.0, 3.0], 4.0,
                          [0.0, 0.0, 0.0], [3.0, 3.0, 3.0])
    problems = local_problems(inst, 10.0)
    x = np.array([1.0, 2.0, 1.0])
    mus = [np.array([0.1, 0.2]), np.array([0.0, 1.0]), np.array([2.0, 0.0])]
    expected = sum(lagrangian(p, x, m) for p, m in zip(problems, mus))
    assert global_lagrangian(problems, x, mus) == pytest.approx(expected)


def test_gradient_only_on_own_coordinate(unit_generator):
    grad = grad_x_lagrangian(unit_generator, np.array([1.0, 1.0]), np.zeros(2))
    assert_allclose(grad, [2.0, 0.0])


def test_equal_multipliers_cancel(unit_generator):
    x = np.array([1.0, 1.0])
    assert_allclose(grad_x_lagrangian(unit_generator, x, np.ones(2)),
                    grad_x_lagrangian(unit_generator, x, np.zeros(2)))


def test_dual_gradient_is_constraint_value(unit_generator):
    x = np.array([1.0, 1.0])
    assert_allclose(grad_mu_lagrangian(unit_generator, x), [-1.0, -1.0])
    assert_allclose(grad_mu_lagrangian(unit_generator, np.array([2.0, 0.0]))[1], 0.0)


def test_dual_gradient_independent_of_multiplier(unit_generator):
    x = np.array([1.3, 0.7])
    f = lambda m: lagrangian(unit_generator, x, m)  # noqa: E731
    assert_allclose(finite_difference_gradient(f, np.zeros(2)), finite_difference_gradient(f, np.full(2, 5.0)),
                    atol=1e-8)


def test_analytic_gradients_match_finite_differences(unit_generator, rng):
    for _ in range(100):
        x = rng.uniform(-3.0, 3.0, size=2)
        mu = rng.uniform(0.0, 10.0, size=2)
        fd_x = finite_difference_gradient(lambda v: lagrangian(unit_generator, v, mu), x)
        an_x = grad_x_lagrangian(unit_generator, x, mu)
        assert np.all(np.abs(fd_x - an_x) <= 1e-6 * np.maximum(1.0, np.abs(an_x)))
        fd_mu = finite_difference_gradient(lambda m: lagrangian(unit_generator, x, m), mu)
        an_mu = grad_mu_lagrangian(unit_generator, x)
        assert np.all(np.abs(fd_mu - an_mu) <= 1e-6 * np.maximum(1.0, np.abs(an_mu)))


def test_dimension_checks(unit_generator):
    with pytest.raises(DimensionError):
        lagrangian(unit_generator, np.ones(3), np.zeros(2))
    with pytest.raises(DimensionError):
        grad_x_lagrangian(unit_generator, np.ones(2), np.zeros(3))


def test_schedule_values():
    s = StepSizeSchedule(15.0, 0.60)
    assert alpha(s, 0) == pytest.approx(15.0)
    assert alpha(s, 99) == pytest.approx(15.0 / 100 ** 0.6)
    assert alpha(s, 99) == pytest.approx(0.9464, abs=1e-4)
    assert s(99) == alpha(s, 99)


def test_schedule_is_decreasing():
    s = StepSizeSchedule(2.0, 1.0)
    values = [alpha(s, t) for t in range(50)]
    assert all(a > b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("c, gamma", [(15.0, 0.4), (15.0, 0.5), (15.0, 1.2), (0.0, 0.6), (-1.0, 0.6)])
def test_schedule_validation(c, gamma):
    with pytest.raises(InvalidSchedule):
        StepSizeSchedule(c, gamma)


def test_negative_iteration_rejected():
    with pytest.raises(InvalidSchedule):
        alpha(StepSizeSchedule(1.0, 1.0), -1)


def test_constant_problem_has_zero_bounds():
    X = ScaledSimplex(3, 1.0)
    problems = [constant_problem(3, 2.0), constant_problem(3, -1.0)]
    bounds = estimate_gradient_bounds(problems, X, samples=50, seed=0)
    assert bounds.L_x == 0.0
    assert_allclose(bounds.L_mu, 0.0)
    assert [m.shape for m in stack_duals(problems)] == [(0,), (0,)]


def test_corner_bounds_match_closed_form():
    inst = build_dispatch(3, [0.5, 0.8, 0.6], [-20.0, -48.0, -26.0], [0.0, 0.0, 0.0], 60.0,
                          [5.0, 10.0, 0.0], [40.0, 45.0, 15.0])
    mu_max = 100.0
    bounds = corner_gradient_bounds(local_problems(inst, mu_max), global_set(inst))
    # |2 a p + b - mu1 + mu2| over p in [0, D], mu in [0, mu_max]^2 peaks at an endpoint
    closed = max(
        max(abs(2 * a * p + b + s * mu_max) for p in (0.0, inst.D) for s in (-1.0, 0.0, 1.0))
        for a, b in zip(inst.a, inst.b)
    )
    assert bounds.L_x == pytest.approx(closed)
    for i in range(inst.n):
        corners = [np.linalg.norm([inst.p_min[i] - p, p - inst.p_max[i]]) for p in (0.0, inst.D)]
        assert bounds.L_mu[i] == pytest.approx(max(corners))


def test_sampled_bounds_dominate_corners():
    inst = build_dispatch(2, [1.0, 2.0], [0.0, 1.0], [0.0, 0.0], 3.0, [0.0, 0.0], [3.0, 3.0])
    problems = local_problems(inst, 5.0)
    X = global_set(inst)
    corners = corner_gradient_bounds(problems, X)
    sampled = estimate_gradient_bounds(problems, X, samples=100, seed=3)
    assert sampled.L_x >= corners.L_x
    assert np.all(sampled.L_mu >= corners.L_mu)
    with pytest.raises(ValueError):
        estimate_gradient_bounds(problems, X, samples=0)
