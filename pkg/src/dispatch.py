"""
Distributed economic dispatch

    min  sum_i a_i p_i^2 + b_i p_i + c_i
    s.t. sum_i p_i = D,  p_min_i <= p_i <= p_max_i

Generator i owns the cost and limits of coordinate i; the balance constraint
together with p >= 0 is the shared set X, a scaled simplex. The centralized
lambda-iteration solver provides the (p*, lambda*, mu*) ground truth.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.config import tolerances
from src.errors import DimensionError, InfeasibleDemand, NotStronglyConvex
from src.graph import DirectedGraph, build_graph
from src.ppsgda import SaddlePoint
from src.problem import GradientBounds, LocalProblem, StepSizeSchedule, corner_gradient_bounds
from src.projections import Box, ScaledSimplex


@dataclass(frozen=True, eq=False)
class DispatchInstance:
    """Quadratic cost coefficients, demand D and generator limits for n generators."""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    D: float
    p_min: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c", "p_min", "p_max"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "D", float(self.D))
        n = self.a.shape[0]
        for name in ("b", "c", "p_min", "p_max"):
            if getattr(self, name).shape != (n,):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True, eq=False)
class DispatchOptimum:
    """Optimal generation p*, balance multiplier lambda*, limit duals mu* (n x 2: mu_min, mu_max)."""
    p_star: np.ndarray
    lambda_star: float
    mu_star: np.ndarray = field(repr=False)
    objective: float = 0.0
    bisection_steps: int = 0

    def saddle_point(self) -> SaddlePoint:
        return SaddlePoint(x_star=self.p_star.copy(), mu_star=[row.copy() for row in self.mu_star])


@dataclass
class KktResiduals:
    stationarity: float
    primal: float
    dual_negativity: float
    complementarity: float

    def worst(self) -> float:
        return max(self.stationarity, self.primal, self.dual_negativity, self.complementarity)


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------

def validate_instance(inst: DispatchInstance) -> None:
    if np.any(inst.a <= 0):
        bad = [int(i) + 1 for i in np.nonzero(inst.a <= 0)[0]]
        raise NotStronglyConvex(f"quadratic coefficient must be positive for generators {bad}")
    if np.any(inst.p_min < 0) or np.any(inst.p_min > inst.p_max):
        raise InfeasibleDemand("generator limits must satisfy 0 <= p_min <= p_max")
    lo, hi = float(inst.p_min.sum()), float(inst.p_max.sum())
    slack = tolerances.feasibility * max(1.0, abs(inst.D))
    if not (lo - slack <= inst.D <= hi + slack):
        raise InfeasibleDemand(f"demand {inst.D:g} outside [{lo:g}, {hi:g}]")


def build_dispatch(n: int, a: Sequence[float], b: Sequence[float], c: Sequence[float], D: float,
                   p_min: Sequence[float], p_max: Sequence[float]) -> DispatchInstance:
    """Validated instance: a_i > 0 and sum p_min <= D <= sum p_max."""
    a_arr = np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()
    inst = DispatchInstance(
        a=a_arr,
        b=np.broadcast_to(np.asarray(b, dtype=float), (n,)).copy(),
        c=np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy(),
        D=D,
        p_min=np.broadcast_to(np.asarray(p_min, dtype=float), (n,)).copy(),
        p_max=np.broadcast_to(np.asarray(p_max, dtype=float), (n,)).copy(),
    )
    validate_instance(inst)
    return inst


def global_set(inst: DispatchInstance) -> ScaledSimplex:
    return ScaledSimplex(d=inst.n, D=inst.D)


def _local_problem(inst: DispatchInstance, i: int, mu_max: float) -> LocalProblem:
    n = inst.n
    a, b, c = float(inst.a[i]), float(inst.b[i]), float(inst.c[i])
    lo, hi = float(inst.p_min[i]), float(inst.p_max[i])
    e_i = np.zeros(n)
    e_i[i] = 1.0
    jac = np.vstack([-e_i, e_i])

    def cost(x):
        return a * x[i] ** 2 + b * x[i] + c

    def cost_gradient(x):
        return (2.0 * a * x[i] + b) * e_i

    def constraints(x):
        return np.array([lo - x[i], x[i] - hi])

    return LocalProblem(
        dim=n,
        cost=cost,
        cost_gradient=cost_gradient,
        dual_box=Box.uniform(2, mu_max),
        constraints=constraints,
        constraint_jacobian=lambda x: jac,
        name=f"generator {i + 1}",
    )


def local_problems(inst: DispatchInstance, mu_max: float) -> List[LocalProblem]:
    """
    One LocalProblem per generator: C_i on coordinate i, g_i = (p_min_i - p_i, p_i - p_max_i),
    duals in [0, mu_max]^2.
    """
    return [_local_problem(inst, i, mu_max) for i in range(inst.n)]


def gradient_bounds(inst: DispatchInstance, mu_max: float) -> GradientBounds:
    """Exact L_x, L_mu: the dispatch gradients are affine, so vertices of X x M_i suffice."""
    return corner_gradient_bounds(local_problems(inst, mu_max), global_set(inst))


# ----------------------------------------------------------------------
# Centralized oracle
# ----------------------------------------------------------------------

def dispatch_at(inst: DispatchInstance, lam: float) -> np.ndarray:
    """p_i(lambda) = clamp((lambda - b_i) / 2a_i, p_min_i, p_max_i)."""
    return np.clip((lam - inst.b) / (2.0 * inst.a), inst.p_min, inst.p_max)


def balance(inst: DispatchInstance, lam: float) -> float:
    """sum_i p_i(lambda) - D, nondecreasing in lambda."""
    return float(dispatch_at(inst, lam).sum() - inst.D)


def solve_centralized(inst: DispatchInstance, verbose: bool = False) -> DispatchOptimum:
    """
    Lambda iteration: bisect the balance function, then pin lambda exactly from
    the generators strictly inside their limits and recover the limit duals.
    """
    validate_instance(inst)
    lo = float(np.min(inst.b)) - 1.0
    hi = float(np.max(2.0 * inst.a * inst.p_max + inst.b)) + 1.0
    steps = 0
    while hi - lo > tolerances.bisection * max(1.0, abs(lo), abs(hi)) and steps < 200:
        mid = 0.5 * (lo + hi)
        if balance(inst, mid) < 0:
            lo = mid
        else:
            hi = mid
        steps += 1
    lam = 0.5 * (lo + hi)

    unclamped = (lam - inst.b) / (2.0 * inst.a)
    edge = tolerances.bisection * np.maximum(1.0, np.abs(unclamped))
    free = (unclamped > inst.p_min + edge) & (unclamped < inst.p_max - edge)
    # Clamped generators sit exactly on a limit
    p = np.where(unclamped <= inst.p_min + edge, inst.p_min, inst.p_max)
    if np.any(free):
        inv = 1.0 / (2.0 * inst.a[free])
        fixed_total = float(p[~free].sum())
        lam = (inst.D - fixed_total + float(np.sum(inst.b[free] * inv))) / float(np.sum(inv))
        p[free] = (lam - inst.b[free]) * inv

    marginal = 2.0 * inst.a * p + inst.b
    mu = np.zeros((inst.n, 2))
    at_min = p == inst.p_min
    at_max = p == inst.p_max
    mu[at_min, 0] = np.maximum(0.0, marginal[at_min] - lam)
    mu[at_max, 1] = np.maximum(0.0, lam - marginal[at_max])

    optimum = DispatchOptimum(p_star=p, lambda_star=float(lam), mu_star=mu,
                              objective=objective(inst, p), bisection_steps=steps)
    if verbose:
        print(f"[ORACLE] lambda* = {optimum.lambda_star:.12g} after {steps} bisection steps, "
              f"cost {optimum.objective:.12g}")
    return optimum


def kkt_residuals(inst: DispatchInstance, p: np.ndarray, lam: float, mu: np.ndarray) -> KktResiduals:
    """
    Stationarity |2a_i p_i + b_i - lambda - mu_min_i + mu_max_i|, primal violation
    (balance and limits), dual negativity and complementary-slackness products.
    """
    p = np.asarray(p, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(inst.n, 2)
    stationarity = np.abs(2.0 * inst.a * p + inst.b - lam - mu[:, 0] + mu[:, 1])
    primal = max(
        abs(float(p.sum()) - inst.D),
        float(np.max(inst.p_min - p)),
        float(np.max(p - inst.p_max)),
        0.0,
    )
    complementarity = np.maximum(np.abs(mu[:, 0] * (inst.p_min - p)), np.abs(mu[:, 1] * (p - inst.p_max)))
    return KktResiduals(
        stationarity=float(np.max(stationarity)),
        primal=primal,
        dual_negativity=max(0.0, float(np.max(-mu))),
        complementarity=float(np.max(complementarity)),
    )


def objective(inst: DispatchInstance, p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.sum(inst.a * p ** 2 + inst.b * p + inst.c))


def lagrangian_value(inst: DispatchInstance, p: np.ndarray, lam: float, mu: np.ndarray) -> float:
    """Cost + lambda (D - sum p) + sum mu_min (p_min - p) + mu_max (p - p_max)."""
    p = np.asarray(p, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(inst.n, 2)
    return (objective(inst, p) + lam * (inst.D - float(p.sum()))
            + float(np.sum(mu[:, 0] * (inst.p_min - p) + mu[:, 1] * (p - inst.p_max))))


# ----------------------------------------------------------------------
# Random instances
# ----------------------------------------------------------------------

def random_instance(n: int, seed: Optional[int] = None) -> DispatchInstance:
    """Feasible instance with demand drawn strictly between the aggregate limits."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.05, 1.0, n)
    b = rng.uniform(-50.0, 10.0, n)
    c = rng.uniform(0.0, 10.0, n)
    p_min = rng.uniform(0.0, 10.0, n)
    p_max = p_min + rng.uniform(5.0, 40.0, n)
    D = float(rng.uniform(p_min.sum(), p_max.sum()))
    return build_dispatch(n, a, b, c, D, p_min, p_max)


def sample_feasible_points(inst: DispatchInstance, count: int,
                           rng: np.random.Generator) -> np.ndarray:
    """
    Points of the box [p_min, p_max] on the hyperplane sum p = D: uniform box
    samples moved toward p_max (or p_min) until the balance holds.
    """
    points = rng.uniform(inst.p_min, inst.p_max, size=(count, inst.n))
    deficit = inst.D - points.sum(axis=1, keepdims=True)
    room = np.where(deficit > 0, inst.p_max - points, points - inst.p_min)
    total = room.sum(axis=1, keepdims=True)
    theta = np.divide(np.abs(deficit), total, out=np.zeros_like(total), where=total > 0)
    return points + np.sign(deficit) * theta * room


# ----------------------------------------------------------------------
# Canonical 4-generator experiment
# ----------------------------------------------------------------------

# Generators 1, 2 and 4 end strictly inside their limits, generator 3 at p_max.
# lambda* = 0.001, so no single agent is stationary at the optimum.
FIG1_COEFFICIENTS = {
    "a": [0.5, 0.8, 0.6, 0.4],
    "b": [-19.999, -47.999, -25.999, -27.999],
    "c": [0.0, 0.0, 0.0, 0.0],
    "D": 100.0,
    "p_min": [5.0, 10.0, 0.0, 10.0],
    "p_max": [40.0, 45.0, 15.0, 50.0],
}
FIG1_EDGES: Tuple[Tuple[int, int], ...] = ((1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (3, 1))
FIG1_STEP_C = 15.0
FIG1_STEP_GAMMA = 0.60


def fig1_fixture() -> Tuple[DispatchInstance, DirectedGraph, StepSizeSchedule]:
    coeffs = FIG1_COEFFICIENTS
    inst = build_dispatch(4, coeffs["a"], coeffs["b"], coeffs["c"], coeffs["D"],
                          coeffs["p_min"], coeffs["p_max"])
    return inst, build_graph(4, FIG1_EDGES), StepSizeSchedule(FIG1_STEP_C, FIG1_STEP_GAMMA)
