"""Graph topologies, gossip matrices and the accelerated gossip primitive.

Communication between agents is modelled as multiplication by a symmetric,
stochastic gossip matrix W compliant with the graph.  Mixing speed is
summarised by the eigengap rho = 1 - max(lambda_2(W), |lambda_min(W)|).
``acc_gossip`` runs the Chebyshev-style two-term recursion that contracts
the consensus error at the accelerated rate (1 - sqrt(rho))^(2H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np

__all__ = [
    "Topology",
    "GossipMatrix",
    "build_topology",
    "diameter",
    "build_gossip_matrix",
    "acceleration_eta",
    "acc_gossip",
    "save_edge_list",
    "load_edge_list",
]

TOPOLOGY_KINDS = ("line", "ring", "star", "grid", "complete", "custom")


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph over agents 0..n_agents-1."""

    n_agents: int
    edges: Tuple[Tuple[int, int], ...]
    kind: str = "custom"

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise ValueError(f"edge ({i}, {j}) out of range for {self.n_agents} nodes")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if not self._connected():
            raise ValueError("topology must be connected")

    def adjacency(self) -> list:
        adj = [[] for _ in range(self.n_agents)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_agents, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def _connected(self) -> bool:
        if self.n_agents == 1:
            return True
        return all(d >= 0 for d in self._bfs_dist(0))

    def _bfs_dist(self, source: int) -> np.ndarray:
        adj = self.adjacency()
        dist = np.full(self.n_agents, -1, dtype=int)
        dist[source] = 0
        queue = [source]
        while queue:
            nxt = []
            for u in queue:
                for v in adj[u]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            queue = nxt
        return dist

    def distance(self, i: int, j: int) -> int:
        return int(self._bfs_dist(i)[j])


def build_topology(kind: str, n_agents: int, *, rows: Optional[int] = None,
                   edges: Optional[Iterable[Tuple[int, int]]] = None) -> Topology:
    """Construct one of the standard shapes (or a custom edge set)."""
    if n_agents < 1:
        raise ValueError("need at least one agent")
    if kind == "line":
        e = [(i, i + 1) for i in range(n_agents - 1)]
    elif kind == "ring":
        if n_agents < 3:
            raise ValueError("a ring needs at least 3 nodes")
        e = [(i, (i + 1) % n_agents) for i in range(n_agents)]
    elif kind == "star":
        if n_agents < 2:
            raise ValueError("a star needs at least 2 nodes")
        e = [(0, i) for i in range(1, n_agents)]
    elif kind == "complete":
        e = [(i, j) for i in range(n_agents) for j in range(i + 1, n_agents)]
    elif kind == "grid":
        r = rows if rows is not None else _near_square_rows(n_agents)
        if n_agents % r != 0:
            raise ValueError(f"grid of {n_agents} nodes cannot have {r} rows")
        c = n_agents // r
        e = []
        for a in range(r):
            for b in range(c):
                u = a * c + b
                if b + 1 < c:
                    e.append((u, u + 1))
                if a + 1 < r:
                    e.append((u, u + c))
    elif kind == "custom":
        if edges is None:
            raise ValueError("custom topology needs an edge list")
        e = list(edges)
    else:
        raise ValueError(f"unknown topology kind {kind!r}")
    return Topology(n_agents, tuple(e), kind)


def _near_square_rows(n: int) -> int:
    r = int(math.isqrt(n))
    while n % r != 0:
        r -= 1
    return r


def diameter(topology: Topology) -> int:
    """Longest shortest-path length, by BFS from every node."""
    if topology.n_agents == 1:
        return 0
    best = 0
    for s in range(topology.n_agents):
        dist = topology._bfs_dist(s)
        if np.any(dist < 0):
            raise ValueError("graph is disconnected")
        best = max(best, int(dist.max()))
    return best


def save_edge_list(topology: Topology, path) -> None:
    """One "i j" pair per line, 0-based node indices."""
    with open(path, "w") as fh:
        for i, j in topology.edges:
            fh.write(f"{i} {j}\n")


def load_edge_list(path) -> Topology:
    edges = []
    n = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer node id") from exc
            edges.append((i, j))
            n = max(n, i + 1, j + 1)
    if not edges:
        raise ValueError(f"{path}: empty edge list")
    return Topology(n, tuple(edges), "custom")


@dataclass(frozen=True)
class GossipMatrix:
    """Symmetric stochastic mixing matrix with its spectral summary."""

    matrix: np.ndarray
    lambda2: float
    lambda_min: float
    rho: float

    def __post_init__(self):
        w = np.array(self.matrix, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "matrix", w)

    @property
    def n_agents(self) -> int:
        return self.matrix.shape[0]


def build_gossip_matrix(topology: Topology, lazy: bool = False) -> GossipMatrix:
    """Metropolis weights: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges.

    Off-diagonal entries are positive exactly on edges, the diagonal absorbs
    the residual mass, so the matrix is symmetric, stochastic and compliant
    with the graph.  With ``lazy`` the matrix is averaged with the identity,
    which forces a nonnegative spectrum so the eigengap is governed by
    lambda_2 alone.
    """
    m = topology.n_agents
    deg = topology.degrees()
    w = np.zeros((m, m))
    for i, j in topology.edges:
        wij = 1.0 / (1.0 + max(deg[i], deg[j]))
        w[i, j] = wij
        w[j, i] = wij
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    if lazy:
        w = (w + np.eye(m)) / 2.0
    if m == 1:
        return GossipMatrix(w, 0.0, 1.0, 1.0)
    eigs = np.linalg.eigvalsh(w)
    lambda2 = float(eigs[-2])
    lambda_min = float(eigs[0])
    rho = 1.0 - max(lambda2, abs(lambda_min))
    if rho <= 0:
        raise ValueError("eigengap must be positive on a connected graph")
    return GossipMatrix(w, lambda2, lambda_min, rho)


def acceleration_eta(gossip: GossipMatrix) -> float:
    """Momentum weight (1 - sqrt(1 - l2^2)) / (1 + sqrt(1 - l2^2))."""
    l2 = gossip.lambda2
    if abs(l2) > 1:
        raise ValueError("lambda2 must lie in [-1, 1]")
    s = math.sqrt(1.0 - l2 * l2)
    return (1.0 - s) / (1.0 + s)


def acc_gossip(rows, gossip: GossipMatrix, rounds: int):
    """Accelerated gossip on the rows of Z.

    Runs Z^{t+1} = (1 + eta) W Z^t - eta Z^{t-1} for t = 0..rounds with
    Z^{-1} = Z^0 = Z and returns Z^{rounds+1}; the loop therefore performs
    ``rounds + 1`` synchronous communication exchanges.  The row mean is an
    invariant of every step.
    """
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    z = np.atleast_2d(np.asarray(rows, dtype=float))
    if z.shape[0] != gossip.n_agents:
        raise ValueError(
            f"got {z.shape[0]} rows for a {gossip.n_agents}-agent gossip matrix"
        )
    eta = acceleration_eta(gossip)
    w = gossip.matrix
    prev = z
    cur = z
    for _ in range(rounds + 1):
        prev, cur = cur, (1.0 + eta) * (w @ cur) - eta * prev
    return cur
