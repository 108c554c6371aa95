"""
Network graphs and combination matrices.

Convention: ``weights[l, k]`` is the weight agent ``k`` assigns to the
iterate received from agent ``l``, so a combination step reads
``new[k] = sum_l weights[l, k] * old[l]``, i.e. ``new = weights.T @ old``.
Left-stochastic means every column sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .exceptions import DimensionMismatch, DisconnectedGraph, EmptyGraph

ROLES = ("A", "A1", "A2", "Identity")
TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with optional self-loops.

    The neighborhood of agent ``k`` is the set of ``l`` with
    ``adjacency[l, k]`` true; it includes ``k`` itself wherever a
    self-loop is declared.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionMismatch(f"adjacency must be square, got {adj.shape}")
        if adj.shape[0] == 0:
            raise EmptyGraph("graph has no agents")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(
        cls,
        n_agents: int,
        edges: Iterable[tuple[int, int]],
        self_loops: bool | Iterable[int] = True,
    ) -> "Graph":
        if n_agents <= 0:
            raise EmptyGraph("n_agents must be positive")
        adj = np.zeros((n_agents, n_agents), dtype=bool)
        for a, b in edges:
            if not (0 <= a < n_agents and 0 <= b < n_agents):
                raise DimensionMismatch(f"edge ({a}, {b}) out of range")
            adj[a, b] = adj[b, a] = True
        if self_loops is True:
            np.fill_diagonal(adj, True)
        elif self_loops is not False:
            for k in self_loops:
                adj[k, k] = True
        return cls(adj)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def self_loops(self) -> np.ndarray:
        return np.diag(self.adjacency).copy()

    def edges(self) -> list[tuple[int, int]]:
        """Off-diagonal edges ``(a, b)`` with ``a < b``."""
        rows, cols = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(a), int(b)) for a, b in zip(rows, cols)]

    def neighbors(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, k])

    def degrees(self) -> np.ndarray:
        """Closed-neighborhood sizes ``|N_k|`` (self counted)."""
        off = self.adjacency.copy()
        np.fill_diagonal(off, False)
        return off.sum(axis=0) + 1

    def is_connected(self) -> bool:
        n = self.n_agents
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            k = frontier.pop()
            for l in np.flatnonzero(self.adjacency[:, k]):
                if not seen[l]:
                    seen[l] = True
                    frontier.append(int(l))
        return bool(seen.all())

    def with_self_loops(self) -> "Graph":
        adj = self.adjacency.copy()
        np.fill_diagonal(adj, True)
        return Graph(adj)

    def permuted(self, perm) -> "Graph":
        perm = np.asarray(perm)
        return Graph(self.adjacency[np.ix_(perm, perm)])

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "edges": [list(e) for e in self.edges()],
            "self_loops": [int(k) for k in np.flatnonzero(self.self_loops)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        loops = data.get("self_loops", True)
        return cls.from_edges(int(data["n_agents"]), [tuple(e) for e in data.get("edges", [])], loops)


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(k, k + 1) for k in range(n - 1)])


def ring_graph(n: int) -> Graph:
    if n < 3:
        return path_graph(n)
    return Graph.from_edges(n, [(k, (k + 1) % n) for k in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph(np.ones((n, n), dtype=bool))


def random_connected_graph(n: int, rng: np.random.Generator, p: float = 0.3) -> Graph:
    """Random spanning tree plus Erdos-Renyi extra edges; always connected."""
    adj = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    for i in range(1, n):
        a = order[i]
        b = order[rng.integers(0, i)]
        adj[a, b] = adj[b, a] = True
    extra = np.triu(rng.random((n, n)) < p, k=1)
    adj |= extra | extra.T
    np.fill_diagonal(adj, True)
    return Graph(adj)


@dataclass(frozen=True, eq=False)
class CombinationMatrix:
    weights: np.ndarray
    graph: Graph
    role: str = "A"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        n = self.graph.n_agents
        if w.shape != (n, n):
            raise DimensionMismatch(f"weights shape {w.shape} does not match {n} agents")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def is_identity(self) -> bool:
        return self.role == "Identity" or np.array_equal(self.weights, np.eye(self.n_agents))

    def combine(self, x: np.ndarray) -> np.ndarray:
        """Apply ``new[k] = sum_l a[l, k] x[l]`` to an ``(N, M)`` array."""
        if self.is_identity:
            return np.array(x, dtype=float, copy=True)
        return self.weights.T @ x

    @classmethod
    def identity(cls, graph: Graph) -> "CombinationMatrix":
        return cls(np.eye(graph.n_agents), graph.with_self_loops(), role="Identity")


@dataclass(frozen=True)
class ValidationReport:
    supported: bool
    left_stochastic: bool
    doubly_stochastic: bool
    primitive: bool
    required_role: str
    tolerance: float = TOL
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.required_role == "A":
            return self.supported and self.left_stochastic and self.doubly_stochastic and self.primitive
        return self.supported and self.left_stochastic

    def flags(self) -> dict:
        return {
            "supported": self.supported,
            "left_stochastic": self.left_stochastic,
            "doubly_stochastic": self.doubly_stochastic,
            "primitive": self.primitive,
        }

    def to_dict(self) -> dict:
        return {**self.flags(), "required_role": self.required_role,
                "tolerance": self.tolerance, "pass": self.passed, **self.details}


def metropolis_weights(graph: Graph) -> CombinationMatrix:
    """Metropolis combination weights.

    Off-diagonal neighbors get ``min(1/|N_l|, 1/|N_k|)`` and the diagonal
    absorbs the remainder, with ``|N_k|`` counting ``k`` itself. The
    diagonal is then at least ``1/|N_k| > 0``, so the returned matrix is
    attached to ``graph.with_self_loops()``.

    Raises
    ------
    EmptyGraph, DisconnectedGraph
    """
    n = graph.n_agents
    if n == 0:
        raise EmptyGraph("graph has no agents")
    if not graph.is_connected():
        raise DisconnectedGraph("Metropolis weights require a connected graph")
    deg = graph.degrees().astype(float)
    off = graph.adjacency.copy()
    np.fill_diagonal(off, False)
    inv = 1.0 / deg
    w = np.where(off, np.minimum(inv[:, None], inv[None, :]), 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=0))
    return CombinationMatrix(w, graph.with_self_loops(), role="A")


def _pattern_is_primitive(pattern: np.ndarray) -> bool:
    # Wielandt: a primitive n x n matrix has A^k > 0 for k = (n-1)^2 + 1.
    n = pattern.shape[0]
    if n == 1:
        return bool(pattern[0, 0])
    target = (n - 1) ** 2 + 1
    base = pattern.astype(np.int64)
    result = np.eye(n, dtype=np.int64)
    k = target
    while k:
        if k & 1:
            result = np.minimum(result @ base, 1)
        base = np.minimum(base @ base, 1)
        k >>= 1
    return bool(result.all())


def validate_combination(
    matrix: CombinationMatrix, required_role: str = "A", tol: float = TOL
) -> ValidationReport:
    """Check support, stochasticity and primitivity of a combination matrix.

    Primitivity is decided on the zero pattern of entries above ``tol``,
    raised to Wielandt's exponent ``(N-1)^2 + 1`` with boolean products,
    so no spectral tolerance enters.
    """
    if required_role not in ROLES:
        raise ValueError(f"unknown role {required_role!r}")
    w = np.asarray(matrix.weights, dtype=float)
    adj = matrix.graph.adjacency
    if w.shape != adj.shape:
        raise DimensionMismatch(f"weights {w.shape} vs graph {adj.shape}")
    nonneg = bool((w >= -tol).all())
    col_err = float(np.abs(w.sum(axis=0) - 1.0).max())
    row_err = float(np.abs(w.sum(axis=1) - 1.0).max())
    supported = bool((np.abs(w[~adj]) <= tol).all())
    left = nonneg and col_err <= tol
    doubly = left and row_err <= tol
    primitive = nonneg and _pattern_is_primitive(w > tol)
    return ValidationReport(
        supported=supported,
        left_stochastic=left,
        doubly_stochastic=doubly,
        primitive=primitive,
        required_role=required_role,
        tolerance=tol,
        details={"max_column_sum_error": col_err, "max_row_sum_error": row_err},
    )


def validate_composite(a1: CombinationMatrix, a2: CombinationMatrix, tol: float = TOL) -> ValidationReport:
    """Validate a pair (A1, A2): each left-stochastic on its graph, and the
    product ``A1 @ A2`` primitive and doubly stochastic."""
    r1 = validate_combination(a1, "A1", tol)
    r2 = validate_combination(a2, "A2", tol)
    graph = a1.graph if not a1.is_identity else a2.graph
    prod = CombinationMatrix(a1.weights @ a2.weights, Graph(np.ones_like(graph.adjacency)), role="A")
    rp = validate_combination(prod, "A", tol)
    return ValidationReport(
        supported=r1.supported and r2.supported,
        left_stochastic=r1.left_stochastic and r2.left_stochastic,
        doubly_stochastic=rp.doubly_stochastic,
        primitive=rp.primitive,
        required_role="A",
        tolerance=tol,
        details={"A1": r1.to_dict(), "A2": r2.to_dict()},
    )
