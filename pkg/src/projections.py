"""
Exact Euclidean projections onto the global set X (a scaled simplex for
dispatch) and onto the per-agent dual boxes M_i, plus an enumeration oracle
used to validate the simplex projection.
"""

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Protocol

import numpy as np

from src.config import tolerances
from src.errors import DimensionError, InvalidSet, TooLarge


class ConvexSet(Protocol):
    """What the algorithm needs from a constraint set."""
    dim: int

    def project(self, u: np.ndarray) -> np.ndarray: ...

    def contains(self, x: np.ndarray, tol: float = ...) -> bool: ...

    def vertices(self) -> np.ndarray: ...

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray: ...


@dataclass(frozen=True)
class ScaledSimplex:
    """{p : p >= 0, sum(p) = D}."""
    d: int
    D: float

    def __post_init__(self):
        if self.D < 0:
            raise InvalidSet(f"simplex level must be nonnegative, got {self.D}")
        if self.d < 1:
            raise InvalidSet(f"simplex dimension must be positive, got {self.d}")

    @property
    def dim(self) -> int:
        return self.d

    def project(self, u: np.ndarray) -> np.ndarray:
        return project_simplex(u, self)

    def contains(self, x: np.ndarray, tol: float = tolerances.feasibility) -> bool:
        x = np.asarray(x, dtype=float)
        scale = max(1.0, self.D)
        return bool(x.shape == (self.d,) and np.all(x >= -tol)
                    and abs(x.sum() - self.D) <= tol * scale)

    def vertices(self) -> np.ndarray:
        return self.D * np.eye(self.d)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform samples (Dirichlet(1, ..., 1) scaled by D)."""
        return self.D * rng.dirichlet(np.ones(self.d), size=count)


@dataclass(frozen=True, eq=False)
class Box:
    """{u : lower <= u <= upper} elementwise."""
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape:
            raise InvalidSet(f"box corners differ in shape: {lower.shape} vs {upper.shape}")
        if np.any(lower > upper):
            raise InvalidSet("box lower corner exceeds upper corner")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, m: int, upper: float, lower: float = 0.0) -> "Box":
        """[lower, upper]^m, the shape used for every dual set M_i."""
        return cls(lower=np.full(m, lower), upper=np.full(m, upper))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, u: np.ndarray) -> np.ndarray:
        return project_box(u, self)

    def contains(self, x: np.ndarray, tol: float = tolerances.feasibility) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(x.shape == self.lower.shape and np.all(x >= self.lower - tol)
                    and np.all(x <= self.upper + tol))

    def vertices(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((1, 0))
        return np.array(list(product(*zip(self.lower, self.upper))), dtype=float)

    def corners(self) -> np.ndarray:
        return self.vertices()

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))


def project_simplex(u: np.ndarray, simplex: ScaledSimplex) -> np.ndarray:
    """
    Sort-and-threshold projection onto {p >= 0, sum p = D}.

    Sort u descending, take the largest k with u_(k) - (cumsum_k - D)/k > 0,
    threshold theta = (cumsum_k - D)/k and return max(u - theta, 0).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (simplex.d,):
        raise DimensionError(f"expected a vector of length {simplex.d}, got shape {u.shape}")
    if simplex.D == 0:
        return np.zeros_like(u)
    ordered = np.sort(u, kind="stable")[::-1]
    cssv = np.cumsum(ordered)
    ks = np.arange(1, u.size + 1)
    k = int(np.nonzero(ordered - (cssv - simplex.D) / ks > 0)[0][-1])
    theta = (cssv[k] - simplex.D) / (k + 1.0)
    return np.maximum(u - theta, 0.0)


def project_box(u: np.ndarray, box: Box) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != box.lower.shape:
        raise DimensionError(f"expected a vector of shape {box.lower.shape}, got {u.shape}")
    return np.clip(u, box.lower, box.upper)


QP_ORACLE_MAX_DIM = 12


def qp_oracle_project(u: np.ndarray, simplex: ScaledSimplex, tol: float = 1e-12) -> np.ndarray:
    """
    Projection onto the scaled simplex by active-set enumeration.

    For every support S (coordinates not forced to zero) the equality-constrained
    least squares has the closed form x_S = u_S + nu with nu = (D - sum u_S)/|S|;
    the point is the projection iff x_S >= 0 and the multipliers of the zeroed
    coordinates, -(u_Z + nu), are nonnegative.
    """
    u = np.asarray(u, dtype=float)
    d = u.shape[0]
    if d > QP_ORACLE_MAX_DIM:
        raise TooLarge(f"enumeration oracle supports d <= {QP_ORACLE_MAX_DIM}, got {d}")
    if u.shape != (simplex.d,):
        raise DimensionError(f"expected a vector of length {simplex.d}, got shape {u.shape}")
    if simplex.D == 0:
        return np.zeros(d)

    scale = max(1.0, float(np.max(np.abs(u))), simplex.D)
    for size in range(d, 0, -1):
        for support in combinations(range(d), size):
            support_idx = list(support)
            nu = (simplex.D - u[support_idx].sum()) / size
            x = np.zeros(d)
            x[support_idx] = u[support_idx] + nu
            zeroed = np.ones(d, dtype=bool)
            zeroed[support_idx] = False
            primal_ok = np.all(x[support_idx] >= -tol * scale)
            dual_ok = np.all(-(u[zeroed] + nu) >= -tol * scale)
            if primal_ok and dual_ok:
                return np.maximum(x, 0.0)
    raise InvalidSet("no KKT point found; the simplex projection always exists")
