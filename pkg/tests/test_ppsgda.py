import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.consensus import q_matrix
from src.dispatch import build_dispatch, local_problems, solve_centralized
from src.errors import ConfigError, DimensionError
from src.graph import build_graph, perron_from_out_degrees
from src.ppsgda import (
    AgentState,
    RunConfig,
    SaddlePoint,
    consensus_residuals,
    detect_t0,
    disturbance_terms,
    initial_states,
    lyapunov_terms,
    ppsgda_round,
    ppsgda_step,
    relative_errors,
    run,
)
from src.problem import (
    LocalProblem,
    StepSizeSchedule,
    alpha,
    constant_problem,
    corner_gradient_bounds,
    grad_mu_lagrangian,
    grad_x_lagrangian,
)
from src.projections import Box, ScaledSimplex


def quadratic_with_cap():
    """||x - (0.8, 0.2)||^2 on the unit simplex, with x_1 <= 0.3 as a local constraint."""
    target = np.array([0.8, 0.2])
    return LocalProblem(
        dim=2,
        cost=lambda x: float(np.sum((x - target) ** 2)),
        cost_gradient=lambda x: 2.0 * (x - target),
        dual_box=Box.uniform(1, 10.0),
        constraints=lambda x: np.array([x[0] - 0.3]),
        constraint_jacobian=lambda x: np.array([[1.0, 0.0]]),
        name="capped quadratic",
    )


def test_single_agent_matches_centralized_descent_ascent():
    P = perron_from_out_degrees(build_graph(1, []))
    problem = quadratic_with_cap()
    X = ScaledSimplex(2, 1.0)
    schedule = StepSizeSchedule(0.5, 0.75)

    states = [AgentState(x=X.project(np.zeros(2)), mu=np.zeros(1), y=1.0)]
    x, mu = states[0].x.copy(), states[0].mu.copy()
    for t in range(60):
        states = ppsgda_step(states, P, [problem], X, t, schedule)
        a_t = alpha(schedule, t)
        x, mu = (X.project(x - a_t * grad_x_lagrangian(problem, x, mu)),
                 problem.dual_box.project(mu + a_t * grad_mu_lagrangian(problem, x)))
        assert_allclose(states[0].x, x, atol=1e-12)
        assert_allclose(states[0].mu, mu, atol=1e-12)
        assert states[0].y == 1.0


def test_zero_gradients_reduce_to_push_sum(skewed4):
    X = ScaledSimplex(3, 1.0)
    problems = [constant_problem(3) for _ in range(4)]
    rng = np.random.default_rng(5)
    states = [AgentState(x=p, mu=np.zeros(0), y=1.0) for p in X.sample(rng, 4)]
    schedule = StepSizeSchedule(1.0, 0.6)
    for t in range(5):
        xs = np.stack([s.x for s in states])
        y = np.array([s.y for s in states])
        Q = q_matrix(skewed4.entries @ y, y, skewed4)
        result = ppsgda_round(states, skewed4, problems, X, t, schedule)
        assert_allclose(np.stack([s.x for s in result.states]), Q @ xs, atol=1e-12)
        assert_allclose(result.z, Q @ xs, atol=1e-12)
        for before, z, after in zip(states, result.z, result.states):
            eps_x, eps_mu = disturbance_terms(before, z, after)
            assert np.linalg.norm(eps_x) <= 1e-12
            assert eps_mu.shape == (0,)
        states = result.states


def test_round_reads_pre_round_state(skewed4):
    X = ScaledSimplex(2, 1.0)
    problems = [quadratic_with_cap() for _ in range(4)]
    schedule = StepSizeSchedule(1.0, 0.6)
    states = [AgentState(x=np.array([1.0, 0.0]) if i == 0 else np.array([0.0, 1.0]), mu=np.zeros(1), y=1.0)
              for i in range(4)]
    snapshot = [s.x.copy() for s in states]
    result = ppsgda_round(states, skewed4, problems, X, 0, schedule)

    # Agent 2 mixes agent 1's round-start estimate, not its updated one
    y = np.ones(4)
    y_next = skewed4.entries @ y
    z2 = (skewed4.entries[1] * y) @ np.stack(snapshot) / y_next[1]
    g2 = grad_x_lagrangian(problems[1], z2, np.zeros(1))
    assert_allclose(result.states[1].x, X.project(z2 - alpha(schedule, 0) * g2 / y_next[1]), atol=1e-12)
    for s, x0 in zip(states, snapshot):
        assert_array_equal(s.x, x0)


def test_round_rejects_mismatched_agents(skewed4):
    X = ScaledSimplex(2, 1.0)
    states = [AgentState(x=np.array([0.5, 0.5]), mu=np.zeros(1), y=1.0)] * 3
    with pytest.raises(DimensionError):
        ppsgda_step(states, skewed4, [quadratic_with_cap()] * 3, X, 0, StepSizeSchedule(1.0, 0.6))


def test_consensus_residuals():
    same = [AgentState(x=np.array([1.0, 2.0]), mu=np.zeros(0), y=1.0) for _ in range(3)]
    assert_allclose(consensus_residuals(same), 0.0)
    pair = [AgentState(x=np.array([0.0]), mu=np.zeros(0), y=1.0),
            AgentState(x=np.array([2.0]), mu=np.zeros(0), y=1.0)]
    assert_allclose(consensus_residuals(pair), [1.0, 1.0])


def test_relative_errors_with_zero_fallback():
    err = relative_errors(np.array([11.0, 0.5, 3.0]), np.array([10.0, 0.0, -2.0]))
    assert_allclose(err, [0.1, 0.5, 2.5])


def test_lyapunov_terms_vanish_at_optimum(fig1):
    opt = fig1["optimum"]
    states = [AgentState(x=opt.p_star.copy(), mu=opt.mu_star[i].copy(), y=1.0) for i in range(4)]
    bounds = corner_gradient_bounds(fig1["problems"], fig1["X"])
    terms = lyapunov_terms(states, opt.p_star, list(opt.mu_star), fig1["problems"], fig1["schedule"], 0,
                           bounds, fig1["P"].perron_vector)
    assert terms.v == pytest.approx(0.0, abs=1e-12)
    assert terms.u == pytest.approx(0.0, abs=1e-9)
    assert terms.c > 0


def test_optimum_is_fixed_point_only_without_balance_multiplier(fig1):
    inst = fig1["instance"]
    balanced = build_dispatch(4, inst.a, inst.b - fig1["optimum"].lambda_star, inst.c, inst.D,
                              inst.p_min, inst.p_max)
    opt = solve_centralized(balanced)
    assert opt.lambda_star == pytest.approx(0.0, abs=1e-9)
    problems = local_problems(balanced, 100.0)
    states = [AgentState(x=opt.p_star.copy(), mu=opt.mu_star[i].copy(), y=1.0) for i in range(4)]
    for t in range(1000, 1020):
        states = ppsgda_step(states, fig1["P"], problems, fig1["X"], t, fig1["schedule"])
    for i, s in enumerate(states):
        assert_allclose(s.x, opt.p_star, atol=1e-9)
        assert_allclose(s.mu, opt.mu_star[i], atol=1e-9)

    # lambda* != 0: every agent leaves the optimum on the first round
    opt = fig1["optimum"]
    states = [AgentState(x=opt.p_star.copy(), mu=opt.mu_star[i].copy(), y=1.0) for i in range(4)]
    states = ppsgda_step(states, fig1["P"], fig1["problems"], fig1["X"], 1000, fig1["schedule"])
    assert min(np.linalg.norm(s.x - opt.p_star) for s in states) > 1e-6


def test_detect_t0():
    w = np.array([0.5, 0.5])
    weights = [np.array([0.4, 1.6]), np.array([0.6, 1.4]), np.array([0.3, 1.7]), np.array([0.6, 1.4]),
               np.array([0.9, 1.1])]
    assert detect_t0(weights, w) == 3
    assert detect_t0([np.array([0.1, 1.9])], w) is None


@pytest.mark.parametrize("kwargs", [{"iterations": 0}, {"trace_stride": 0}, {"initial_x": "origin"}])
def test_run_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_initial_states_modes(fig1):
    X, problems = fig1["X"], fig1["problems"]
    zero = initial_states(RunConfig(iterations=1), problems, X)
    for s in zero:
        assert_allclose(s.x, 25.0)
        assert_allclose(s.mu, 0.0)
        assert s.y == 1.0
    per_agent = initial_states(RunConfig(iterations=1, initial_x=100.0 * np.eye(4)), problems, X)
    assert_allclose(per_agent[2].x, [0.0, 0.0, 100.0, 0.0])
    random_a = initial_states(RunConfig(iterations=1, initial_x="random", seed=4), problems, X)
    random_b = initial_states(RunConfig(iterations=1, initial_x="random", seed=4), problems, X)
    for a, b in zip(random_a, random_b):
        assert X.contains(a.x, 1e-10)
        assert_array_equal(a.x, b.x)
    with pytest.raises(ConfigError):
        initial_states(RunConfig(iterations=1, initial_x=np.ones(3)), problems, X)


def test_trace_rows_follow_stride(fig1):
    config = RunConfig(iterations=1, schedule=fig1["schedule"], trace_stride=10)
    result = run(config, fig1["P"], fig1["problems"], fig1["X"])
    assert [r.t for r in result.trace.records] == [0]

    config = RunConfig(iterations=25, schedule=fig1["schedule"], trace_stride=10)
    result = run(config, fig1["P"], fig1["problems"], fig1["X"])
    assert [r.t for r in result.trace.records] == [0, 10, 20]
    assert not result.trace.has_oracle
    assert result.trace.records[0].rel_err_max is None
    assert_allclose(result.trace.records[0].eps_x_norm, 0.0)


def test_short_run_invariants(fig1):
    config = RunConfig(iterations=300, schedule=fig1["schedule"], trace_stride=5)
    result = run(config, fig1["P"], fig1["problems"], fig1["X"],
                 oracle_optimum=fig1["optimum"].saddle_point())
    trace = result.trace
    assert trace.feasibility_violations == 0
    assert trace.eps_x_violations == 0
    assert trace.eps_mu_violations == 0
    assert trace.max_weight_sum_error <= 1e-10
    assert trace.max_mixing_row_error <= 1e-12
    assert trace.min_u >= -1e-9
    assert len(trace.lyapunov) == 301
    assert all(r.rel_err_max is not None and r.v is not None for r in trace.records)
    assert all(s.y > 0 for s in result.states)


def test_runs_are_deterministic(fig1):
    config = RunConfig(iterations=200, schedule=fig1["schedule"], trace_stride=7)
    oracle = fig1["optimum"].saddle_point()
    a = run(config, fig1["P"], fig1["problems"], fig1["X"], oracle_optimum=oracle)
    b = run(config, fig1["P"], fig1["problems"], fig1["X"], oracle_optimum=oracle)
    for ra, rb in zip(a.trace.records, b.trace.records):
        assert ra.t == rb.t
        assert_array_equal(ra.consensus_residual, rb.consensus_residual)
        assert_array_equal(ra.rel_err_max, rb.rel_err_max)
        assert ra.v == rb.v
    for sa, sb in zip(a.states, b.states):
        assert_array_equal(sa.x, sb.x)


def test_saddle_point_from_oracle(fig1):
    sp = fig1["optimum"].saddle_point()
    assert isinstance(sp, SaddlePoint)
    assert len(sp.mu_star) == 4
    assert_allclose(sp.x_star.sum(), 100.0)
