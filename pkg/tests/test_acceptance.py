"""
End-to-end properties of the 4-generator preset run (4000 rounds, stride 10).
"""

import numpy as np
import pytest

from src.cli import iterations_to_threshold, trace_frame, trace_columns

pytestmark = pytest.mark.slow


def max_error_at(trace, t):
    record = next(r for r in trace.records if r.t == t)
    return float(np.max(record.rel_err_max))


def test_relative_error_thresholds(fig1_run):
    _, _, result = fig1_run
    assert max_error_at(result.trace, 1000) <= 0.04
    assert max_error_at(result.trace, 4000) <= 0.02
    assert iterations_to_threshold(result.trace, 0.04) <= 1000


def test_trace_shape(fig1_run):
    _, _, result = fig1_run
    frame = trace_frame(result.trace)
    assert len(frame) == 401
    assert list(frame.columns) == trace_columns(4, True)
    assert frame["t"].is_monotonic_increasing


def test_disturbance_bounds_hold_every_round(fig1_run):
    _, _, result = fig1_run
    assert result.trace.eps_x_violations == 0
    assert result.trace.eps_mu_violations == 0


def test_iterates_stay_feasible(fig1_run):
    _, _, result = fig1_run
    trace = result.trace
    assert trace.feasibility_violations == 0
    assert trace.max_weight_sum_error <= 1e-10
    assert trace.max_mixing_row_error <= 1e-12


def test_lyapunov_inequality(fig1_run):
    _, _, result = fig1_run
    trace = result.trace
    assert trace.t0 is not None
    assert trace.prop1_checked == 4000 - trace.t0
    assert trace.prop1_violations == 0
    assert trace.min_u >= -1e-9


def test_final_distances(fig1_run):
    _, optimum, result = fig1_run
    x_star = optimum.p_star
    for state, mu_star in zip(result.states, optimum.mu_star):
        assert np.linalg.norm(state.x - x_star) <= 1e-2 * np.linalg.norm(x_star)
        assert np.linalg.norm(state.mu - mu_star) <= 0.05 * (1.0 + np.linalg.norm(mu_star))
    assert np.max(result.final_consensus_residual()) <= 1e-3


def test_consensus_weighted_sum_settles(fig1_run):
    _, _, result = fig1_run
    trace = result.trace
    assert np.all(np.isfinite(trace.lemma4b_sums))
    increments = trace.lemma4b_increments
    assert max(increments[-100:]) <= 1e-2 * max(increments)


def test_runtime(fig1_run):
    _, _, result = fig1_run
    assert result.trace.elapsed_seconds <= 10.0
