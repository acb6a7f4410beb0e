"""
Push-sum consensus engine and the diagnostics built on its row-stochastic
reformulation.

    y[t+1] = P y[t],  x[t+1] = P x[t],  z_i[t+1] = x_i[t+1] / y_i[t+1]

Q[t] = diag(y[t+1])^-1 P diag(y[t]) is row-stochastic and z[t+1] = Q[t] z[t].
Phi(t, s) = Q[t] Q[t-1] ... Q[s] collapses to diag(y[t+1])^-1 P^(t+1-s) diag(y[s]).
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Tuple

import numpy as np
from scipy import stats

from src.config import tolerances
from src.errors import AlreadyMixed, DimensionError, InconsistentWeights, InvalidRange
from src.graph import PerronMatrix


@dataclass(frozen=True)
class PushSumState:
    """Values x (n x d), positive weights y (n), de-biased estimates z = x / y."""
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, x0: np.ndarray) -> "PushSumState":
        """x[0] = z[0] = x0 and y[0] = 1."""
        x0 = np.asarray(x0, dtype=float)
        if x0.ndim == 1:
            # One scalar value per agent
            x0 = x0[:, None]
        return cls(x=x0.copy(), y=np.ones(x0.shape[0]), z=x0.copy(), t=0)


@dataclass
class MixingEstimate:
    """Fitted geometric decay r(t) <= C * lam^(t - s) of the Phi(t, s) column spread."""
    C: float
    lam: float
    residuals: List[float] = field(repr=False)
    slope: float = 0.0
    r_squared: float = 0.0


@dataclass
class LimitReport:
    """Deviation of Phi(t_max, s) from its limit (1/n) 1 y[s]^T."""
    s: int
    t_max: int
    deviation: float
    tol: float
    passed: bool
    max_row_sum_error: float = 0.0


def pushsum_step(state: PushSumState, P: PerronMatrix) -> PushSumState:
    if state.x.shape[0] != P.n:
        raise DimensionError(f"state has {state.x.shape[0]} agents, P is {P.n} x {P.n}")
    y_next = P.entries @ state.y
    x_next = P.entries @ state.x
    z_next = x_next / y_next[:, None]
    return PushSumState(x=x_next, y=y_next, z=z_next, t=state.t + 1)


def run_pushsum(x0: np.ndarray, P: PerronMatrix, steps: int) -> PushSumState:
    state = PushSumState.initial(x0)
    for _ in range(steps):
        state = pushsum_step(state, P)
    return state


def weight_trajectory(P: PerronMatrix, t: int) -> List[np.ndarray]:
    """y[0], ..., y[t] with y[0] = 1."""
    ys = [np.ones(P.n)]
    for _ in range(t):
        ys.append(P.entries @ ys[-1])
    return ys


def q_matrix(y_next: np.ndarray, y: np.ndarray, P: PerronMatrix) -> np.ndarray:
    """Q[t]_ij = P_ij y_j / y_next_i."""
    y_next = np.asarray(y_next, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(y_next <= 0):
        raise InconsistentWeights("push-sum weights must be strictly positive")
    mismatch = np.max(np.abs(P.entries @ y - y_next))
    if mismatch > tolerances.weight_consistency:
        raise InconsistentWeights(f"y_next differs from P y by {mismatch:.3e}")
    return P.entries * y[None, :] / y_next[:, None]


def phi_product(P: PerronMatrix, s: int, t: int) -> np.ndarray:
    """Phi(t, s) through the closed form diag(y[t+1])^-1 P^(t+1-s) diag(y[s])."""
    if s < 0 or s > t:
        raise InvalidRange(f"need 0 <= s <= t, got s={s}, t={t}")
    ys = weight_trajectory(P, t + 1)
    power = np.linalg.matrix_power(P.entries, t + 1 - s)
    return power * ys[s][None, :] / ys[t + 1][:, None]


def phi_by_factors(P: PerronMatrix, s: int, t: int) -> np.ndarray:
    """Phi(t, s) as the explicit ordered product Q[t] ... Q[s] (cross-validation path)."""
    if s < 0 or s > t:
        raise InvalidRange(f"need 0 <= s <= t, got s={s}, t={t}")
    ys = weight_trajectory(P, t + 1)
    product = np.eye(P.n)
    for k in range(s, t + 1):
        product = q_matrix(ys[k + 1], ys[k], P) @ product
    return product


def phi_sequence(P: PerronMatrix, s: int, t_max: int) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield (t, Phi(t, s)) for t = s..t_max, carrying P^(t+1-s) forward."""
    if s < 0 or s > t_max:
        raise InvalidRange(f"need 0 <= s <= t_max, got s={s}, t_max={t_max}")
    y = np.ones(P.n)
    for _ in range(s):
        y = P.entries @ y
    y_s = y.copy()
    y_next = P.entries @ y
    power = P.entries.copy()
    for t in range(s, t_max + 1):
        yield t, power * y_s[None, :] / y_next[:, None]
        power = P.entries @ power
        y_next = P.entries @ y_next


def verify_lemma1_limits(P: PerronMatrix, s: int, t_max: int, tol: float) -> LimitReport:
    """Compare Phi(t_max, s) with the limit (1/n) 1 y[s]^T."""
    if t_max <= s:
        raise InvalidRange(f"need t_max > s, got s={s}, t_max={t_max}")
    phi = phi_product(P, s, t_max)
    y_s = weight_trajectory(P, s)[s]
    limit = np.outer(np.ones(P.n), y_s) / P.n
    deviation = float(np.max(np.abs(phi - limit)))
    row_err = float(np.max(np.abs(phi.sum(axis=1) - 1.0)))
    return LimitReport(s=s, t_max=t_max, deviation=deviation, tol=tol,
                       passed=deviation <= tol, max_row_sum_error=row_err)


def column_spread(phi: np.ndarray) -> float:
    """max_ij |Phi_ij - (1/n) sum_i Phi_ij|."""
    return float(np.max(np.abs(phi - phi.mean(axis=0, keepdims=True))))


def estimate_mixing(P: PerronMatrix, s: int, t_max: int) -> MixingEstimate:
    """
    Fit log r(t) = log C + (t - s) log lam over the tail half of the residuals
    that sit above the floating-point floor.
    """
    if t_max - s < 10:
        raise InvalidRange(f"need t_max - s >= 10, got s={s}, t_max={t_max}")
    residuals: List[float] = []
    for t, phi in phi_sequence(P, s, t_max):
        if t > s:
            residuals.append(column_spread(phi))

    values = np.asarray(residuals)
    # Everything after the first residual at the floor is round-off
    below = np.nonzero(values <= tolerances.mixing_floor)[0]
    usable = int(below[0]) if below.size else values.size
    if usable < 3:
        raise AlreadyMixed(f"residuals below {tolerances.mixing_floor:g} from t = {s + 1 + usable} on")
    values = values[:usable]
    lags = np.arange(1, usable + 1, dtype=float)
    tail = len(values) // 2
    lags, values = lags[-max(tail, 3):], values[-max(tail, 3):]

    fit = stats.linregress(lags, np.log(values))
    return MixingEstimate(
        C=float(np.exp(fit.intercept)),
        lam=float(np.exp(fit.slope)),
        residuals=residuals,
        slope=float(fit.slope),
        r_squared=float(fit.rvalue ** 2),
    )
