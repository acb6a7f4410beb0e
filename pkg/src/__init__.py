"""
PPSGDA - Source Package
"""

from src.config import solver_defaults, tolerances
from src.graph import DirectedGraph, PerronMatrix, build_graph, perron_from_out_degrees
from src.ppsgda import AgentState, RunConfig, RunTrace, run, ppsgda_step
from src.dispatch import DispatchInstance, build_dispatch, solve_centralized, fig1_fixture

__all__ = [
    "solver_defaults",
    "tolerances",
    "DirectedGraph",
    "PerronMatrix",
    "build_graph",
    "perron_from_out_degrees",
    "AgentState",
    "RunConfig",
    "RunTrace",
    "run",
    "ppsgda_step",
    "DispatchInstance",
    "build_dispatch",
    "solve_centralized",
    "fig1_fixture",
]
