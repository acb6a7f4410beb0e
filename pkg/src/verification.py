"""
Property suite behind the `verify` command.

Each check returns a CheckReport; a failed property is a FAIL result, never an
exception.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from src.config import solver_defaults, tolerances
from src.consensus import estimate_mixing, phi_sequence, q_matrix, weight_trajectory
from src.dispatch import (
    balance,
    fig1_fixture,
    global_set,
    kkt_residuals,
    lagrangian_value,
    local_problems,
    random_instance,
    sample_feasible_points,
    solve_centralized,
)
from src.errors import AlreadyMixed
from src.graph import (
    PerronMatrix,
    perron_from_out_degrees,
    random_strongly_connected,
    ring_graph,
    second_eigenvalue_modulus,
)
from src.problem import (
    corner_gradient_bounds,
    estimate_gradient_bounds,
    finite_difference_gradient,
    grad_mu_lagrangian,
    grad_x_lagrangian,
    lagrangian,
)
from src.projections import ScaledSimplex, project_simplex, qp_oracle_project


class CheckResult(Enum):
    """Outcome of one property check."""
    PASS = "PASS"
    FAIL = "FAIL"


@dataclass
class CheckReport:
    name: str
    result: CheckResult
    detail: str
    metrics: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.result is CheckResult.PASS


def _report(name: str, ok: bool, detail: str, **metrics: float) -> CheckReport:
    return CheckReport(name=name, result=CheckResult.PASS if ok else CheckResult.FAIL,
                       detail=detail, metrics=metrics)


def random_test_graphs(count: int, seed: int, n_range=(2, 10), edge_probability: float = 0.3) -> List[PerronMatrix]:
    rng = np.random.default_rng(seed)
    matrices = []
    for k in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        g = random_strongly_connected(n, edge_probability, seed=seed * 1000 + k)
        matrices.append(perron_from_out_degrees(g))
    return matrices


# ----------------------------------------------------------------------
# Consensus
# ----------------------------------------------------------------------

def check_perron_matrices(graphs: List[PerronMatrix]) -> CheckReport:
    """Every column of P sums to 1 and the Perron vector is a positive fixed point of P."""
    worst_column = 0.0
    worst_fixed = 0.0
    non_positive = 0
    for P in graphs:
        worst_column = max(worst_column, float(np.max(np.abs(P.column_sums() - 1.0))))
        worst_fixed = max(worst_fixed, float(np.max(np.abs(P.entries @ P.perron_vector - P.perron_vector))))
        non_positive += int(np.any(P.perron_vector <= 0.0))
    ok = worst_column <= tolerances.column_sum and worst_fixed <= 100 * tolerances.power_iteration and non_positive == 0
    return _report("perron matrices", ok,
                   f"max column-sum error {worst_column:.2e}, max |P w - w| {worst_fixed:.2e}, "
                   f"{non_positive} non-positive Perron vectors",
                   max_column_error=worst_column)


def check_row_stochastic_products(graphs: List[PerronMatrix], t_max: int = 1000,
                                  starts=(0, 5, 17), tol: float = 1e-12) -> CheckReport:
    """Row sums of every Q[t] and Phi(t, s) stay within tol of 1."""
    worst = 0.0
    for P in graphs:
        ys = weight_trajectory(P, t_max + 1)
        for t in range(t_max + 1):
            worst = max(worst, float(np.max(np.abs(q_matrix(ys[t + 1], ys[t], P).sum(axis=1) - 1.0))))
        for s in starts:
            for _, phi in phi_sequence(P, s, t_max):
                worst = max(worst, float(np.max(np.abs(phi.sum(axis=1) - 1.0))))
    return _report("row-stochastic products", worst <= tol,
                   f"max row-sum error {worst:.2e} over {len(graphs)} graphs", max_error=worst)


def check_phi_limits(graphs: List[PerronMatrix], t: int = 500, starts=(0, 5, 17),
                     tol: float = 1e-8) -> CheckReport:
    """Phi(t, s) approaches (1/n) 1 y[s]^T."""
    worst = 0.0
    for P in graphs:
        ys = weight_trajectory(P, max(starts))
        for s in starts:
            phi = next(phi for k, phi in phi_sequence(P, s, t) if k == t)
            limit = np.outer(np.ones(P.n), ys[s]) / P.n
            worst = max(worst, float(np.max(np.abs(phi - limit))))
    return _report("product limits", worst <= tol,
                   f"max |Phi({t}, s) - 1 y[s]^T / n| = {worst:.2e}", max_deviation=worst)


def check_mixing_rate(graphs: List[PerronMatrix], max_n: int = 8, horizon: int = 200, lam_tol: float = 0.05,
                      min_r_squared: float = 0.95) -> CheckReport:
    """
    Fit the geometric decay of the product spread on every test graph with
    n <= max_n, plus the directed rings n = 3..max_n, and compare the fitted
    rate with |lambda_2(P)|. Graphs that mix exactly in a few rounds are skipped.
    """
    candidates = [(f"graph {k}", P) for k, P in enumerate(graphs) if P.n <= max_n]
    candidates += [(f"ring {n}", perron_from_out_degrees(ring_graph(n))) for n in range(3, max_n + 1)]
    failures = []
    skipped = 0
    worst_gap = 0.0
    for label, P in candidates:
        lam2 = second_eigenvalue_modulus(P)
        try:
            est = estimate_mixing(P, 0, horizon)
        except AlreadyMixed:
            skipped += 1
            continue
        gap = abs(est.lam - lam2)
        worst_gap = max(worst_gap, gap)
        if not (0.0 < est.lam < 1.0 and est.slope < 0 and est.r_squared >= min_r_squared and gap <= lam_tol):
            failures.append(f"{label} (n={P.n}): lam={est.lam:.4f} vs {lam2:.4f}, R^2={est.r_squared:.3f}")
    fitted = len(candidates) - skipped
    detail = "; ".join(failures) if failures else (
        f"{fitted} graphs fitted, {skipped} already mixed, max |lam - |lambda_2|| = {worst_gap:.4f}")
    return _report("mixing rate", not failures and fitted > 0, detail, max_gap=worst_gap, fitted=fitted)


# ----------------------------------------------------------------------
# Projections and gradients
# ----------------------------------------------------------------------

def check_projection_oracle(cases: int, seed: int, max_dim: int = 6, tol: float = 1e-9) -> CheckReport:
    """Sort-and-threshold projection equals the enumeration oracle and is non-expansive."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    expansions = 0
    for _ in range(cases):
        d = int(rng.integers(1, max_dim + 1))
        simplex = ScaledSimplex(d=d, D=float(rng.uniform(0.0, 10.0)))
        u = rng.normal(scale=5.0, size=d)
        v = rng.normal(scale=5.0, size=d)
        pu = project_simplex(u, simplex)
        worst = max(worst, float(np.max(np.abs(pu - qp_oracle_project(u, simplex)))))
        if np.linalg.norm(pu - project_simplex(v, simplex)) > np.linalg.norm(u - v) + 1e-12:
            expansions += 1
    return _report("projection oracle", worst <= tol and expansions == 0,
                   f"max deviation {worst:.2e}, {expansions} expansive pairs in {cases}",
                   max_deviation=worst, expansions=expansions)


def check_gradient_bounds(samples: Optional[int] = None, seed: int = 0, mu_max: float = 100.0) -> CheckReport:
    """No sampled gradient of the fixture problems exceeds the vertex bounds."""
    samples = solver_defaults.bound_samples if samples is None else samples
    inst, _, _ = fig1_fixture()
    problems = local_problems(inst, mu_max)
    X = global_set(inst)
    corners = corner_gradient_bounds(problems, X)
    sampled = estimate_gradient_bounds(problems, X, samples, seed=seed, inflation=1.0)
    excess_x = sampled.L_x - corners.L_x
    excess_mu = float(np.max(sampled.L_mu - corners.L_mu))
    ok = excess_x <= 1e-9 * corners.L_x and excess_mu <= 1e-9 * float(np.max(corners.L_mu))
    return _report("gradient bounds", ok,
                   f"L_x = {corners.L_x:.6g}, sampled excess {excess_x:.2e} (x), {excess_mu:.2e} (mu) "
                   f"over {samples} samples", L_x=corners.L_x)


def check_gradients(points: int, seed: int, mu_max: float = 100.0, h: float = 1e-3,
                    rel_tol: float = 1e-6) -> CheckReport:
    """
    Analytic Lagrangian gradients of the fixture problems against central
    differences. The local Lagrangians are quadratic, so central differences
    are exact up to round-off for any step.
    """
    rng = np.random.default_rng(seed)
    inst, _, _ = fig1_fixture()
    problems = local_problems(inst, mu_max)
    worst = 0.0
    for p in problems:
        xs = inst.D * rng.dirichlet(np.ones(inst.n), size=points)
        mus = rng.uniform(0.0, mu_max, size=(points, p.m))
        for x, mu in zip(xs, mus):
            an_x = grad_x_lagrangian(p, x, mu)
            fd_x = finite_difference_gradient(lambda v: lagrangian(p, v, mu), x, h)
            an_mu = grad_mu_lagrangian(p, x)
            fd_mu = finite_difference_gradient(lambda m: lagrangian(p, x, m), mu, h)
            err = max(float(np.max(np.abs(fd_x - an_x) / np.maximum(1.0, np.abs(an_x)))),
                      float(np.max(np.abs(fd_mu - an_mu) / np.maximum(1.0, np.abs(an_mu)))))
            worst = max(worst, err)
    return _report("gradient check", worst <= rel_tol,
                   f"max scaled difference {worst:.2e} over {points} points per problem", max_error=worst)


# ----------------------------------------------------------------------
# Dispatch oracle
# ----------------------------------------------------------------------

def check_dispatch_oracle(instances: int, samples: int, seed: int, max_n: int = 10,
                          kkt_tol: float = 1e-10) -> CheckReport:
    """KKT residuals, optimality against feasible samples, strong duality, balance monotonicity."""
    rng = np.random.default_rng(seed)
    worst_kkt = 0.0
    beaten = 0
    worst_gap = 0.0
    non_monotone = 0
    for k in range(instances):
        inst = random_instance(int(rng.integers(1, max_n + 1)), seed=seed * 100_000 + k)
        opt = solve_centralized(inst)
        worst_kkt = max(worst_kkt, kkt_residuals(inst, opt.p_star, opt.lambda_star, opt.mu_star).worst())

        pts = sample_feasible_points(inst, samples, rng)
        costs = np.sum(inst.a * pts ** 2 + inst.b * pts + inst.c, axis=1)
        if np.any(costs < opt.objective - 1e-9 * max(1.0, abs(opt.objective))):
            beaten += 1
        gap = abs(lagrangian_value(inst, opt.p_star, opt.lambda_star, opt.mu_star) - opt.objective)
        worst_gap = max(worst_gap, gap / max(1.0, abs(opt.objective)))

        grid = np.linspace(opt.lambda_star - 50.0, opt.lambda_star + 50.0, 41)
        values = [balance(inst, lam) for lam in grid]
        if np.any(np.diff(values) < -1e-12):
            non_monotone += 1

    ok = worst_kkt <= kkt_tol and beaten == 0 and worst_gap <= 1e-9 and non_monotone == 0
    return _report(
        "dispatch oracle", ok,
        f"worst KKT {worst_kkt:.2e}, {beaten} instances beaten by samples, "
        f"duality gap {worst_gap:.2e}, {non_monotone} non-monotone",
        worst_kkt=worst_kkt, beaten=beaten, duality_gap=worst_gap,
    )


# ----------------------------------------------------------------------
# Fixture run
# ----------------------------------------------------------------------

def check_fig1_run(iterations: Optional[int] = None) -> List[CheckReport]:
    """The 4-generator run: error thresholds, disturbance bounds, Lyapunov inequality, final distances."""
    from src.cli import fig1_config, iterations_to_threshold, simulate

    config = fig1_config()
    if iterations is not None:
        config = config.model_copy(update={"iterations": iterations})
    experiment, optimum, result = simulate(config)
    trace = result.trace
    reports = []

    by_t = {r.t: float(np.max(r.rel_err_max)) for r in trace.records}
    err_1000 = by_t.get(1000)
    final_err = float(np.max(result.final_relative_errors(optimum.p_star)))
    reached = iterations_to_threshold(trace, 0.04)
    ok = final_err <= 0.02 and (err_1000 is None or err_1000 <= 0.04)
    reports.append(_report("fig1 relative error", ok,
                           f"max error {err_1000 if err_1000 is not None else float('nan'):.4g} at t=1000, "
                           f"{final_err:.4g} at t={config.iterations}; below 0.04 from t={reached}",
                           final_error=final_err))

    bound_violations = trace.eps_x_violations + trace.eps_mu_violations
    reports.append(_report("disturbance bounds", bound_violations == 0 and trace.feasibility_violations == 0,
                           f"{trace.eps_x_violations} eps_x, {trace.eps_mu_violations} eps_mu, "
                           f"{trace.feasibility_violations} feasibility violations"))

    ok = trace.t0 is not None and trace.prop1_violations == 0 and trace.min_u >= -1e-9
    reports.append(_report("lyapunov inequality", ok,
                           f"t0={trace.t0}, {trace.prop1_violations}/{trace.prop1_checked} violations, "
                           f"min u_t={trace.min_u:.3e}", min_u=trace.min_u))

    x_star = optimum.p_star
    mu_star = optimum.mu_star
    x_ok = all(np.linalg.norm(s.x - x_star) <= 1e-2 * np.linalg.norm(x_star) for s in result.states)
    mu_ok = all(np.linalg.norm(s.mu - m) <= 0.05 * (1.0 + np.linalg.norm(m)) for s, m in zip(result.states, mu_star))
    residual = float(np.max(result.final_consensus_residual()))
    reports.append(_report("final distances", x_ok and mu_ok and residual <= 1e-3,
                           f"primal ok={x_ok}, dual ok={mu_ok}, consensus residual {residual:.2e}",
                           consensus_residual=residual))
    return reports


def run_suite(quick: bool = False, seed: int = 0) -> List[CheckReport]:
    """Every property check; quick mode shrinks the random case counts."""
    graph_count = 10 if quick else 50
    cases = 100 if quick else 1000
    instances = 50 if quick else 1000
    samples = 100 if quick else 1000
    points = 20 if quick else 100

    print(f"[VERIFY] Running {'quick' if quick else 'full'} suite (seed {seed})")
    graphs = random_test_graphs(graph_count, seed)
    reports = [
        check_perron_matrices(graphs),
        check_row_stochastic_products(graphs),
        check_phi_limits(graphs),
        check_mixing_rate(graphs),
        check_projection_oracle(cases, seed),
        check_gradients(points, seed),
        check_gradient_bounds(200 if quick else None, seed),
        check_dispatch_oracle(instances, samples, seed),
    ]
    reports.extend(check_fig1_run())
    return reports
