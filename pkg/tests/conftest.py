import numpy as np
import pytest

from src.cli import fig1_config, simulate
from src.dispatch import fig1_fixture, local_problems, global_set, solve_centralized
from src.graph import build_graph, perron_from_out_degrees


@pytest.fixture
def ring3():
    return perron_from_out_degrees(build_graph(3, [(1, 2), (2, 3), (3, 1)]))


@pytest.fixture
def skewed4():
    """4-vertex digraph with unequal out-degrees (non-uniform Perron vector)."""
    return perron_from_out_degrees(build_graph(4, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (1, 4)]))


@pytest.fixture(scope="session")
def fig1():
    inst, graph, schedule = fig1_fixture()
    P = perron_from_out_degrees(graph)
    return {
        "instance": inst,
        "graph": graph,
        "schedule": schedule,
        "P": P,
        "problems": local_problems(inst, 100.0),
        "X": global_set(inst),
        "optimum": solve_centralized(inst),
    }


@pytest.fixture(scope="session")
def fig1_run():
    """The full 4000-round preset run (experiment, oracle optimum, run result)."""
    return simulate(fig1_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
