"""
Local problems of the distributed program

    min_x  sum_i F_i(x)   s.t.  g_i(x) <= 0 (private to agent i),  x in X (shared)

with local Lagrangians L_i(x, mu_i) = F_i(x) + mu_i^T g_i(x), the step-size
schedule alpha_t = c / (t + 1)^gamma and bounds on the Lagrangian gradients.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from src.errors import DimensionError, InvalidSchedule
from src.projections import Box, ConvexSet


Vector = np.ndarray


def _no_constraints(x: Vector) -> Vector:
    return np.zeros(0)


@dataclass(frozen=True, eq=False)
class LocalProblem:
    """
    One agent's private data: a differentiable cost and m differentiable
    inequality constraints g_ij(x) <= 0, with analytic derivatives.

    constraints(x) returns the m-vector g_i(x); constraint_jacobian(x) the
    m x d matrix whose rows are the gradients of g_ij.
    """
    dim: int
    cost: Callable[[Vector], float]
    cost_gradient: Callable[[Vector], Vector]
    dual_box: Box
    constraints: Callable[[Vector], Vector] = _no_constraints
    constraint_jacobian: Optional[Callable[[Vector], np.ndarray]] = None
    name: str = ""

    @property
    def m(self) -> int:
        return self.dual_box.dim

    def jacobian(self, x: Vector) -> np.ndarray:
        if self.constraint_jacobian is None:
            return np.zeros((self.m, self.dim))
        return np.asarray(self.constraint_jacobian(x), dtype=float).reshape(self.m, self.dim)


def _check_point(p: LocalProblem, x: Vector) -> Vector:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,):
        raise DimensionError(f"{p.name or 'problem'} expects x of length {p.dim}, got shape {x.shape}")
    return x


def _check_dual(p: LocalProblem, mu: Vector) -> Vector:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (p.m,):
        raise DimensionError(f"{p.name or 'problem'} expects mu of length {p.m}, got shape {mu.shape}")
    return mu


def lagrangian(p: LocalProblem, x: Vector, mu: Vector) -> float:
    """F_i(x) + mu^T g_i(x)."""
    x = _check_point(p, x)
    mu = _check_dual(p, mu)
    return float(p.cost(x) + mu @ np.asarray(p.constraints(x), dtype=float))


def grad_x_lagrangian(p: LocalProblem, x: Vector, mu: Vector) -> Vector:
    """grad F_i(x) + sum_j mu_j grad g_ij(x)."""
    x = _check_point(p, x)
    mu = _check_dual(p, mu)
    return np.asarray(p.cost_gradient(x), dtype=float) + p.jacobian(x).T @ mu


def grad_mu_lagrangian(p: LocalProblem, x: Vector) -> Vector:
    """g_i(x); L_i is affine in mu so the gradient does not depend on it."""
    x = _check_point(p, x)
    return np.asarray(p.constraints(x), dtype=float)


def global_lagrangian(problems: Sequence[LocalProblem], x: Vector, mus: Sequence[Vector]) -> float:
    """L(x, mu) = sum_i L_i(x, mu_i)."""
    return sum(lagrangian(p, x, mu) for p, mu in zip(problems, mus))


def finite_difference_gradient(f: Callable[[Vector], float], x: Vector, h: float = 1e-6) -> Vector:
    """Central differences (f(x + h e_k) - f(x - h e_k)) / 2h."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        grad[k] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class StepSizeSchedule:
    """alpha_t = c / (t + 1)^gamma for t >= 0, with c > 0 and gamma in (0.5, 1]."""
    c: float
    gamma: float

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidSchedule(f"step-size scale c must be positive, got {self.c}")
        if not (0.5 < self.gamma <= 1.0):
            raise InvalidSchedule(f"step-size exponent gamma must lie in (0.5, 1], got {self.gamma}")

    def __call__(self, t: int) -> float:
        return alpha(self, t)


def alpha(s: StepSizeSchedule, t: int) -> float:
    # Iteration 0 uses the value of the 1-based schedule at t = 1
    if t < 0:
        raise InvalidSchedule(f"iteration index must be nonnegative, got {t}")
    return s.c / (t + 1.0) ** s.gamma


@dataclass
class GradientBounds:
    """Upper bounds L_x on ||grad_x L_i|| and L_mu[i] on ||grad_mu L_i|| over X x M_i."""
    L_x: float
    L_mu: np.ndarray = field(repr=False)


def corner_gradient_bounds(problems: Sequence[LocalProblem], X: ConvexSet) -> GradientBounds:
    """
    Maximum gradient norms over the vertices of X x M_i.

    Exact when the gradient maps are affine in (x, mu) (quadratic costs, affine
    constraints): the norm is then convex and peaks at an extreme point.
    """
    x_vertices = X.vertices()
    L_x = 0.0
    L_mu = np.zeros(len(problems))
    for i, p in enumerate(problems):
        mu_vertices = p.dual_box.vertices()
        for x in x_vertices:
            L_mu[i] = max(L_mu[i], float(np.linalg.norm(grad_mu_lagrangian(p, x))))
            for mu in mu_vertices:
                L_x = max(L_x, float(np.linalg.norm(grad_x_lagrangian(p, x, mu))))
    return GradientBounds(L_x=L_x, L_mu=L_mu)


def estimate_gradient_bounds(problems: Sequence[LocalProblem], X: ConvexSet, samples: int,
                             seed: Optional[int] = None, inflation: float = 1.5) -> GradientBounds:
    """
    Monte Carlo maximum of the gradient norms over sampled (x, mu) in X x M_i,
    merged with the vertex maximum and inflated by `inflation`.
    """
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    rng = np.random.default_rng(seed)
    corners = corner_gradient_bounds(problems, X)
    L_x = corners.L_x
    L_mu = corners.L_mu.copy()
    xs = X.sample(rng, samples)
    for i, p in enumerate(problems):
        mus = p.dual_box.sample(rng, samples)
        for x, mu in zip(xs, mus):
            L_x = max(L_x, float(np.linalg.norm(grad_x_lagrangian(p, x, mu))))
            L_mu[i] = max(L_mu[i], float(np.linalg.norm(grad_mu_lagrangian(p, x))))
    return GradientBounds(L_x=inflation * L_x, L_mu=inflation * L_mu)


def constant_problem(dim: int, value: float = 0.0, name: str = "") -> LocalProblem:
    """Constant cost, no constraints: every gradient is zero."""
    return LocalProblem(
        dim=dim,
        cost=lambda x: value,
        cost_gradient=lambda x: np.zeros(dim),
        dual_box=Box.uniform(0, 0.0),
        name=name,
    )


def stack_duals(problems: Sequence[LocalProblem]) -> List[Vector]:
    """Zero dual vector for each problem (the initial mu_i[0])."""
    return [np.zeros(p.m) for p in problems]
