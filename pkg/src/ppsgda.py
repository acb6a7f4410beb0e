"""
Projected push-sum gradient descent-ascent.

One synchronous round, every agent reading the round-start state:

    y_i'  = sum_j P_ij y_j
    z_i   = (1 / y_i') sum_j P_ij y_j x_j
    x_i'  = Proj_X( z_i - alpha_t grad_x L_i(z_i, mu_i) / y_i' )
    mu_i' = Proj_Mi( mu_i + alpha_t grad_mu L_i(z_i, mu_i) )

Also hosts the convergence diagnostics evaluated along a run: disturbance
terms, consensus residuals, relative errors and the Lyapunov terms.
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import solver_defaults, tolerances
from src.errors import ConfigError, DimensionError
from src.graph import PerronMatrix
from src.problem import (
    GradientBounds,
    LocalProblem,
    StepSizeSchedule,
    alpha,
    corner_gradient_bounds,
    global_lagrangian,
    grad_mu_lagrangian,
    grad_x_lagrangian,
    stack_duals,
)
from src.projections import ConvexSet


@dataclass(frozen=True, eq=False)
class AgentState:
    """Agent i's primal estimate x (full d-vector), dual mu (m_i) and push-sum weight y."""
    x: np.ndarray
    mu: np.ndarray
    y: float


@dataclass
class RoundResult:
    """New states plus the mixed points z_i[t] and weights y[t+1] of the round."""
    states: List[AgentState]
    z: np.ndarray
    y_next: np.ndarray


@dataclass(frozen=True, eq=False)
class SaddlePoint:
    """Optimal primal point x* and per-agent optimal duals mu*_i from an external oracle."""
    x_star: np.ndarray
    mu_star: List[np.ndarray]


@dataclass
class LyapunovTerms:
    v: float
    u: float
    c: float


InitialPoint = Union[str, np.ndarray, Sequence[Sequence[float]]]


@dataclass
class RunConfig:
    """Iteration budget, schedule, trace stride, seed and initial primal point."""
    iterations: int = field(default_factory=lambda: solver_defaults.iterations)
    schedule: StepSizeSchedule = field(
        default_factory=lambda: StepSizeSchedule(solver_defaults.step_c, solver_defaults.step_gamma))
    trace_stride: int = field(default_factory=lambda: solver_defaults.trace_stride)
    seed: int = field(default_factory=lambda: solver_defaults.seed)
    initial_x: InitialPoint = "projected-zero"  # or "random", a point, or one point per agent
    verbose: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations", f"must be at least 1, got {self.iterations}")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride", f"must be at least 1, got {self.trace_stride}")
        if isinstance(self.initial_x, str) and self.initial_x not in ("projected-zero", "random"):
            raise ConfigError("initial_x", f"unknown initialization '{self.initial_x}'")


@dataclass
class TraceRecord:
    """
    Metrics of state t: alpha_t, per-agent consensus residual, the disturbance
    norms of the round that produced x[t] (zero at t = 0) and, with an oracle,
    relative errors and the Lyapunov terms.
    """
    t: int
    alpha: float
    consensus_residual: np.ndarray
    eps_x_norm: np.ndarray
    eps_mu_norm: np.ndarray
    rel_err_max: Optional[np.ndarray] = None
    v: Optional[float] = None
    u: Optional[float] = None
    c: Optional[float] = None


@dataclass
class RunTrace:
    """Traced records plus run-wide checks evaluated on every round."""
    n: int
    records: List[TraceRecord] = field(default_factory=list)
    has_oracle: bool = False
    bounds: Optional[GradientBounds] = None
    eps_x_violations: int = 0
    eps_mu_violations: int = 0
    feasibility_violations: int = 0
    max_weight_sum_error: float = 0.0
    max_mixing_row_error: float = 0.0
    lemma4b_sums: Optional[np.ndarray] = None
    lemma4b_increments: List[float] = field(default_factory=list, repr=False)
    weights: List[np.ndarray] = field(default_factory=list, repr=False)
    lyapunov: List[LyapunovTerms] = field(default_factory=list, repr=False)
    t0: Optional[int] = None
    prop1_checked: int = 0
    prop1_violations: int = 0
    min_u: Optional[float] = None
    elapsed_seconds: float = 0.0

    def final(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None


@dataclass
class RunResult:
    trace: RunTrace
    states: List[AgentState]

    def final_consensus_residual(self) -> np.ndarray:
        return consensus_residuals(self.states)

    def final_relative_errors(self, x_star: np.ndarray) -> np.ndarray:
        """Per-agent max relative error of the final estimates."""
        return np.array([float(np.max(relative_errors(s.x, x_star))) for s in self.states])


# ----------------------------------------------------------------------
# Round engine
# ----------------------------------------------------------------------

def mix(states: Sequence[AgentState], P: PerronMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """y[t+1] = P y[t] and z[t] = Q[t] x[t]."""
    y = np.array([s.y for s in states])
    xs = np.stack([s.x for s in states])
    weighted = P.entries * y[None, :]
    y_next = weighted.sum(axis=1)
    z = (weighted @ xs) / y_next[:, None]
    return y_next, z


def ppsgda_round(states: Sequence[AgentState], P: PerronMatrix, problems: Sequence[LocalProblem],
                 X: ConvexSet, t: int, schedule: StepSizeSchedule) -> RoundResult:
    if len(states) != P.n or len(problems) != P.n:
        raise DimensionError(f"{len(states)} states and {len(problems)} problems for {P.n} agents")
    a_t = alpha(schedule, t)
    y_next, z = mix(states, P)
    new_states = []
    for i, (state, p) in enumerate(zip(states, problems)):
        descent = z[i] - a_t * grad_x_lagrangian(p, z[i], state.mu) / y_next[i]
        ascent = state.mu + a_t * grad_mu_lagrangian(p, z[i])
        new_states.append(AgentState(
            x=X.project(descent),
            mu=p.dual_box.project(ascent),
            y=float(y_next[i]),
        ))
    return RoundResult(states=new_states, z=z, y_next=y_next)


def ppsgda_step(states: Sequence[AgentState], P: PerronMatrix, problems: Sequence[LocalProblem],
                X: ConvexSet, t: int, schedule: StepSizeSchedule) -> List[AgentState]:
    return ppsgda_round(states, P, problems, X, t, schedule).states


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------

def disturbance_terms(state_before: AgentState, z: np.ndarray,
                      state_after: AgentState) -> Tuple[np.ndarray, np.ndarray]:
    """eps_x = x_i[t+1] - z_i[t], eps_mu = mu_i[t+1] - mu_i[t]."""
    return state_after.x - np.asarray(z, dtype=float), state_after.mu - state_before.mu


def consensus_residuals(states: Sequence[AgentState]) -> np.ndarray:
    """||x_i - x_bar|| with x_bar the unweighted network average."""
    xs = np.stack([s.x for s in states])
    return np.linalg.norm(xs - xs.mean(axis=0), axis=1)


def relative_errors(x: np.ndarray, x_star: np.ndarray,
                    floor: float = tolerances.near_zero_optimum) -> np.ndarray:
    """|x_k - x*_k| / |x*_k|, or the absolute error where |x*_k| < floor."""
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    abs_err = np.abs(x - x_star)
    denom = np.abs(x_star)
    safe = np.where(denom < floor, 1.0, denom)
    return np.where(denom < floor, abs_err, abs_err / safe)


def lyapunov_terms(states: Sequence[AgentState], x_star: np.ndarray, mu_star: Sequence[np.ndarray],
                   problems: Sequence[LocalProblem], schedule: StepSizeSchedule, t: int,
                   bounds: GradientBounds, w: np.ndarray) -> LyapunovTerms:
    """
    v_t = sum_i y_i ||x_i - x*||^2 + ||mu_i - mu*_i||^2
    u_t = 2 a_t (L(x_bar, mu*) - L(x*, mu*) + L(x*, mu*) - L(x*, mu[t]))
    c_t = 2 a_t L_x n sum_i ||x_i - x_bar|| + L_x^2 a_t^2 sum_i 1/w_i + a_t^2 sum_i L_mu_i^2
    """
    n = len(states)
    a_t = alpha(schedule, t)
    x_star = np.asarray(x_star, dtype=float)
    xs = np.stack([s.x for s in states])
    x_bar = xs.mean(axis=0)
    mus = [s.mu for s in states]

    v = sum(s.y * float(np.sum((s.x - x_star) ** 2)) + float(np.sum((s.mu - m) ** 2))
            for s, m in zip(states, mu_star))
    L_opt = global_lagrangian(problems, x_star, mu_star)
    u = 2.0 * a_t * (global_lagrangian(problems, x_bar, mu_star) - L_opt
                     + L_opt - global_lagrangian(problems, x_star, mus))
    spread = float(np.sum(np.linalg.norm(xs - x_bar, axis=1)))
    c = (2.0 * a_t * bounds.L_x * n * spread
         + bounds.L_x ** 2 * a_t ** 2 * float(np.sum(1.0 / np.asarray(w)))
         + a_t ** 2 * float(np.sum(np.asarray(bounds.L_mu) ** 2)))
    return LyapunovTerms(v=float(v), u=float(u), c=float(c))


def detect_t0(weights: Sequence[np.ndarray], w: np.ndarray) -> Optional[int]:
    """First t from which y_i[s] >= n w_i / 2 holds for every agent and every later s."""
    n = len(w)
    threshold = n * np.asarray(w) / 2.0
    t0 = None
    for t in range(len(weights) - 1, -1, -1):
        if np.all(weights[t] >= threshold):
            t0 = t
        else:
            break
    return t0


# ----------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------

def initial_states(config: RunConfig, problems: Sequence[LocalProblem], X: ConvexSet) -> List[AgentState]:
    """x_i[0] = Proj_X(initial point), mu_i[0] = 0, y_i[0] = 1."""
    n = len(problems)
    if isinstance(config.initial_x, str):
        if config.initial_x == "random":
            rng = np.random.default_rng(config.seed)
            points = X.sample(rng, n)
        else:
            points = np.zeros((n, X.dim))
    else:
        points = np.asarray(config.initial_x, dtype=float)
        if points.ndim == 1:
            points = np.tile(points, (n, 1))
        if points.shape != (n, X.dim):
            raise ConfigError("initial_x", f"expected shape ({X.dim},) or ({n}, {X.dim}), got {points.shape}")
    duals = stack_duals(problems)
    return [AgentState(x=X.project(points[i]), mu=duals[i], y=1.0) for i in range(n)]


def _record(t: int, states: Sequence[AgentState], schedule: StepSizeSchedule, eps_x: np.ndarray,
            eps_mu: np.ndarray, oracle: Optional[SaddlePoint], terms: Optional[LyapunovTerms]) -> TraceRecord:
    rel = None
    if oracle is not None:
        rel = np.array([float(np.max(relative_errors(s.x, oracle.x_star))) for s in states])
    return TraceRecord(
        t=t,
        alpha=alpha(schedule, t),
        consensus_residual=consensus_residuals(states),
        eps_x_norm=eps_x.copy(),
        eps_mu_norm=eps_mu.copy(),
        rel_err_max=rel,
        v=terms.v if terms else None,
        u=terms.u if terms else None,
        c=terms.c if terms else None,
    )


def run(config: RunConfig, P: PerronMatrix, problems: Sequence[LocalProblem], X: ConvexSet,
        oracle_optimum: Optional[SaddlePoint] = None, bounds: Optional[GradientBounds] = None) -> RunResult:
    """
    Iterate ppsgda rounds from the initial state, tracing every trace_stride
    rounds (and t = 0). Feasibility, the disturbance bounds and, with an oracle,
    the Lyapunov inequality are checked on every round.
    """
    started = time.perf_counter()
    n = P.n
    if len(problems) != n:
        raise DimensionError(f"{len(problems)} problems for {n} agents")
    if bounds is None:
        bounds = corner_gradient_bounds(problems, X)
    schedule = config.schedule
    w = P.perron_vector

    states = initial_states(config, problems, X)
    trace = RunTrace(n=n, has_oracle=oracle_optimum is not None, bounds=bounds)
    trace.lemma4b_sums = np.zeros(n)
    trace.weights.append(np.ones(n))

    if config.verbose:
        print(f"[RUN] Starting: {n} agents, {config.iterations} rounds, "
              f"alpha_t = {schedule.c}/(t+1)^{schedule.gamma}")

    zeros = np.zeros(n)
    terms = None
    if oracle_optimum is not None:
        terms = lyapunov_terms(states, oracle_optimum.x_star, oracle_optimum.mu_star,
                               problems, schedule, 0, bounds, w)
        trace.lyapunov.append(terms)
    trace.records.append(_record(0, states, schedule, zeros, zeros, oracle_optimum, terms))

    for t in range(config.iterations):
        a_t = alpha(schedule, t)
        residuals = consensus_residuals(states)
        trace.lemma4b_sums += a_t * residuals
        trace.lemma4b_increments.append(float(np.max(a_t * residuals)))

        result = ppsgda_round(states, P, problems, X, t, schedule)

        q_rows = (P.entries * np.array([s.y for s in states])[None, :]) / result.y_next[:, None]
        trace.max_mixing_row_error = max(trace.max_mixing_row_error,
                                         float(np.max(np.abs(q_rows.sum(axis=1) - 1.0))))
        trace.max_weight_sum_error = max(trace.max_weight_sum_error, abs(float(result.y_next.sum()) - n))

        eps_x = np.zeros(n)
        eps_mu = np.zeros(n)
        for i, (before, after) in enumerate(zip(states, result.states)):
            dx, dmu = disturbance_terms(before, result.z[i], after)
            eps_x[i] = np.linalg.norm(dx)
            eps_mu[i] = np.linalg.norm(dmu)
            if eps_x[i] > a_t * bounds.L_x / result.y_next[i] + tolerances.bound_slack * max(1.0, eps_x[i]):
                trace.eps_x_violations += 1
            if eps_mu[i] > a_t * bounds.L_mu[i] + tolerances.bound_slack * max(1.0, eps_mu[i]):
                trace.eps_mu_violations += 1
            if not X.contains(after.x, 1e-10) or not problems[i].dual_box.contains(after.mu, 1e-12):
                trace.feasibility_violations += 1

        states = result.states
        trace.weights.append(result.y_next)

        if oracle_optimum is not None:
            terms = lyapunov_terms(states, oracle_optimum.x_star, oracle_optimum.mu_star,
                                   problems, schedule, t + 1, bounds, w)
            trace.lyapunov.append(terms)

        if (t + 1) % config.trace_stride == 0:
            trace.records.append(_record(t + 1, states, schedule, eps_x, eps_mu, oracle_optimum, terms))

        if config.verbose and (t + 1) % 1000 == 0:
            print(f"[RUN] Round {t + 1}: max consensus residual {float(np.max(consensus_residuals(states))):.3e}")

    if oracle_optimum is not None:
        _check_lyapunov(trace, w)

    trace.elapsed_seconds = time.perf_counter() - started
    if config.verbose:
        print(f"[RUN] Finished {config.iterations} rounds in {trace.elapsed_seconds:.2f}s")
    return RunResult(trace=trace, states=states)


def _check_lyapunov(trace: RunTrace, w: np.ndarray) -> None:
    """v_{t+1} <= v_t - u_t + c_t for every t >= t0; u_t >= -1e-9 for every t."""
    terms = trace.lyapunov
    trace.min_u = min(term.u for term in terms)
    trace.t0 = detect_t0(trace.weights, w)
    if trace.t0 is None:
        return
    for t in range(trace.t0, len(terms) - 1):
        now, nxt = terms[t], terms[t + 1]
        rhs = now.v - now.u + now.c
        trace.prop1_checked += 1
        if nxt.v > rhs + tolerances.lyapunov_slack * max(1.0, abs(now.v)):
            trace.prop1_violations += 1
