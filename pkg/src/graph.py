"""
Communication topology: directed graphs with forced self-loops, the strong
connectivity certificate, and the column-stochastic Perron matrix built from
out-degree weighting.

Vertices are 1-based at the API boundary (edge lists from configuration files)
and 0-based inside matrices.
"""

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from src.config import tolerances
from src.errors import InvalidEdge, NotStronglyConnected, PpsgdaError


Edge = Tuple[int, int]


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph on vertices 1..n; (j, i) in edges means j sends to i."""
    n: int
    edges: FrozenSet[Edge]

    @property
    def self_loops(self) -> FrozenSet[Edge]:
        return frozenset((v, v) for v in range(1, self.n + 1))

    def out_degree(self, vertex: int) -> int:
        """Out-degree of a vertex, self-loop included."""
        return sum(1 for (j, _) in self.edges if j == vertex)

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(1, self.n + 1))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class PerronMatrix:
    """Column-stochastic mixing matrix P with its unit-sum Perron vector w."""
    entries: np.ndarray = field(repr=False)
    perron_vector: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def column_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> DirectedGraph:
    """Build a graph on 1..n, adding every self-loop and dropping duplicates."""
    if n < 1:
        raise PpsgdaError(f"vertex count must be positive, got {n}")
    edge_set: Set[Edge] = set()
    for edge in edges:
        j, i = int(edge[0]), int(edge[1])
        if not (1 <= j <= n and 1 <= i <= n):
            raise InvalidEdge(f"edge ({j}, {i}) has an endpoint outside [1, {n}]")
        edge_set.add((j, i))
    edge_set.update((v, v) for v in range(1, n + 1))
    return DirectedGraph(n=n, edges=frozenset(edge_set))


def is_strongly_connected(g: DirectedGraph) -> bool:
    return nx.is_strongly_connected(g.to_networkx())


def components(g: DirectedGraph) -> List[List[int]]:
    """Strongly connected components, largest first, vertices sorted."""
    comps = [sorted(c) for c in nx.strongly_connected_components(g.to_networkx())]
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def perron_from_out_degrees(g: DirectedGraph) -> PerronMatrix:
    """
    Weight every message of vertex j by 1/d_j (d_j counts the self-loop).

    Returns:
        PerronMatrix with P[i, j] = 1/d_j for each edge (j, i) and the Perron
        vector from power iteration, normalized to unit sum.
    """
    if not is_strongly_connected(g):
        comps = components(g)
        raise NotStronglyConnected(
            f"graph has {len(comps)} strongly connected components: {comps}"
        )
    n = g.n
    out_deg = np.zeros(n)
    for (j, _) in g.edges:
        out_deg[j - 1] += 1
    entries = np.zeros((n, n))
    for (j, i) in g.edges:
        entries[i - 1, j - 1] = 1.0 / out_deg[j - 1]
    return PerronMatrix(entries=entries, perron_vector=perron_vector(entries))


def perron_vector(entries: np.ndarray) -> np.ndarray:
    """Right eigenvector of a primitive column-stochastic matrix for eigenvalue 1."""
    n = entries.shape[0]
    w = np.full(n, 1.0 / n)
    for _ in range(tolerances.power_iteration_max_steps):
        w_next = entries @ w
        w_next /= w_next.sum()
        if np.max(np.abs(w_next - w)) <= tolerances.power_iteration:
            return w_next
        w = w_next
    raise PpsgdaError("power iteration did not reach tolerance; is P primitive?")


def second_eigenvalue_modulus(P: PerronMatrix) -> float:
    """|lambda_2(P)|: the second-largest eigenvalue modulus."""
    moduli = np.sort(np.abs(np.linalg.eigvals(P.entries)))[::-1]
    return float(moduli[1]) if moduli.size > 1 else 0.0


# ----------------------------------------------------------------------
# Named generators
# ----------------------------------------------------------------------

def ring_graph(n: int) -> DirectedGraph:
    """Directed ring 1 -> 2 -> ... -> n -> 1."""
    return build_graph(n, [(v, v % n + 1) for v in range(1, n + 1)])


def complete_graph(n: int) -> DirectedGraph:
    return build_graph(n, [(j, i) for j in range(1, n + 1) for i in range(1, n + 1) if i != j])


def random_strongly_connected(n: int, edge_probability: float, seed: Optional[int] = None) -> DirectedGraph:
    """
    Random Hamiltonian cycle plus Bernoulli(edge_probability) extra edges.
    Strongly connected by construction; deterministic for a given seed.
    """
    if not (0.0 <= edge_probability <= 1.0):
        raise PpsgdaError(f"edge probability must be in [0, 1], got {edge_probability}")
    rng = np.random.default_rng(seed)
    order = [int(v) + 1 for v in rng.permutation(n)]
    edges: List[Edge] = [(order[k], order[(k + 1) % n]) for k in range(n)] if n > 1 else []
    extra = rng.random((n, n)) < edge_probability
    for j in range(1, n + 1):
        for i in range(1, n + 1):
            if i != j and extra[j - 1, i - 1]:
                edges.append((j, i))
    return build_graph(n, edges)


GENERATORS = ("ring", "complete", "random")


def from_spec(n: int, edges: Optional[Sequence[Sequence[int]]] = None, generator: Optional[str] = None,
              seed: Optional[int] = None, edge_probability: float = 0.3) -> DirectedGraph:
    """Build a graph from its configuration form: explicit edges or a named generator."""
    if generator is None:
        return build_graph(n, edges or [])
    if generator == "ring":
        return ring_graph(n)
    if generator == "complete":
        return complete_graph(n)
    if generator == "random":
        return random_strongly_connected(n, edge_probability, seed)
    raise PpsgdaError(f"unknown graph generator '{generator}' (expected one of {GENERATORS})")
