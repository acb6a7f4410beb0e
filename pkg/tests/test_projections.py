import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DimensionError, InvalidSet, TooLarge
from src.projections import Box, ScaledSimplex, project_box, project_simplex, qp_oracle_project


def test_feasible_point_unchanged():
    simplex = ScaledSimplex(d=3, D=2.0)
    u = np.array([0.5, 1.0, 0.5])
    assert_allclose(project_simplex(u, simplex), u, atol=1e-15)


def test_interior_shift():
    assert_allclose(project_simplex(np.array([0.2, 0.3]), ScaledSimplex(2, 1.0)), [0.45, 0.55])


def test_corner_case():
    simplex = ScaledSimplex(2, 1.0)
    assert_allclose(project_simplex(np.array([2.0, 0.0]), simplex), [1.0, 0.0])
    assert_allclose(qp_oracle_project(np.array([2.0, 0.0]), simplex), [1.0, 0.0])


def test_singleton_simplex():
    simplex = ScaledSimplex(1, 5.0)
    for u in (-3.0, 0.0, 5.0, 12.0):
        assert_allclose(project_simplex(np.array([u]), simplex), [5.0])
        assert_allclose(qp_oracle_project(np.array([u]), simplex), [5.0])


def test_zero_level_simplex():
    assert_allclose(project_simplex(np.array([1.0, -2.0, 3.0]), ScaledSimplex(3, 0.0)), 0.0)


def test_ties_are_handled():
    out = project_simplex(np.array([1.0, 1.0, 1.0]), ScaledSimplex(3, 1.0))
    assert_allclose(out, 1 / 3)


def test_invalid_simplex():
    with pytest.raises(InvalidSet):
        ScaledSimplex(2, -1.0)
    with pytest.raises(InvalidSet):
        ScaledSimplex(0, 1.0)


def test_wrong_dimension_rejected():
    with pytest.raises(DimensionError):
        project_simplex(np.ones(3), ScaledSimplex(2, 1.0))
    with pytest.raises(DimensionError):
        project_box(np.ones(3), Box.uniform(2, 1.0))


def test_oracle_refuses_large_dimension():
    with pytest.raises(TooLarge):
        qp_oracle_project(np.ones(13), ScaledSimplex(13, 1.0))


def test_matches_oracle_on_random_inputs(rng):
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        simplex = ScaledSimplex(d, float(rng.uniform(0.0, 10.0)))
        u = rng.normal(scale=5.0, size=d)
        assert np.max(np.abs(project_simplex(u, simplex) - qp_oracle_project(u, simplex))) <= 1e-9


def test_output_feasible_and_idempotent(rng):
    for _ in range(200):
        d = int(rng.integers(1, 20))
        simplex = ScaledSimplex(d, float(rng.uniform(0.1, 100.0)))
        p = project_simplex(rng.normal(scale=50.0, size=d), simplex)
        assert simplex.contains(p)
        assert_allclose(project_simplex(p, simplex), p, atol=1e-9)


def test_non_expansive(rng):
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        simplex = ScaledSimplex(d, float(rng.uniform(0.0, 10.0)))
        u, v = rng.normal(scale=5.0, size=(2, d))
        gap = np.linalg.norm(project_simplex(u, simplex) - project_simplex(v, simplex))
        assert gap <= np.linalg.norm(u - v) + 1e-12


def test_box_clamp():
    box = Box.uniform(2, 10.0)
    assert_allclose(project_box(np.array([-1.0, 5.0]), box), [0.0, 5.0])
    assert_allclose(project_box(np.array([3.0, 12.0]), box), [3.0, 10.0])
    assert_allclose(project_box(np.array([2.0, 7.0]), box), [2.0, 7.0])


def test_box_validation():
    with pytest.raises(InvalidSet):
        Box(lower=np.array([1.0]), upper=np.array([0.0]))
    with pytest.raises(InvalidSet):
        Box(lower=np.zeros(2), upper=np.ones(3))


def test_vertices():
    assert_allclose(ScaledSimplex(3, 2.0).vertices(), 2.0 * np.eye(3))
    corners = Box.uniform(2, 5.0).corners()
    assert {tuple(c) for c in corners} == {(0.0, 0.0), (0.0, 5.0), (5.0, 0.0), (5.0, 5.0)}
    assert Box.uniform(0, 1.0).vertices().shape == (1, 0)


def test_samples_lie_in_sets(rng):
    simplex = ScaledSimplex(4, 100.0)
    for p in simplex.sample(rng, 50):
        assert simplex.contains(p, 1e-9)
    box = Box.uniform(3, 2.0)
    for u in box.sample(rng, 50):
        assert box.contains(u)
