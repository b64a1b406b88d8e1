"""
Undirected weighted communication networks.

Nodes are indexed from 0 internally. The experiment config uses 1-based
edge lists, see :meth:`Network.from_edge_list`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TOL_EIG = 1e-9


class GraphError(ValueError):
    """Raised for malformed or disconnected networks."""


@dataclass(frozen=True)
class Network:
    """
    Undirected weighted graph.

    Parameters
    ----------
    n_nodes : int
        Number of agents ``N``.
    edges : sequence of (i, j, weight)
        0-based undirected edges. Each pair is normalized to ``i < j`` and the
        list is sorted lexicographically, which fixes the column order of the
        incidence matrix.
    """

    n_nodes: int
    edges: tuple[tuple[int, int, float], ...] = field(default=())

    def __post_init__(self):
        if self.n_nodes < 1:
            raise GraphError("empty graph: the network needs at least one node")
        seen = set()
        normalized = []
        for e in self.edges:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise GraphError(f"edge ({i}, {j}) references a node outside [0, {self.n_nodes})")
            if not w > 0 or not np.isfinite(w):
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            i, j = min(i, j), max(i, j)
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            normalized.append((i, j, w))
        object.__setattr__(self, "edges", tuple(sorted(normalized)))

    @classmethod
    def from_edge_list(cls, n_nodes, edges):
        """Build from ``[i, j, weight]`` triples with 1-based node indices."""
        return cls(n_nodes, tuple((int(i) - 1, int(j) - 1, float(w)) for i, j, w in edges))

    def to_edge_list(self):
        """1-based ``[i, j, weight]`` triples, the inverse of :meth:`from_edge_list`."""
        return [[i + 1, j + 1, w] for i, j, w in self.edges]

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def adjacency(self):
        A = np.zeros((self.n_nodes, self.n_nodes))
        for i, j, w in self.edges:
            A[i, j] = A[j, i] = w
        return A

    @cached_property
    def neighbors(self):
        nb = [[] for _ in range(self.n_nodes)]
        for i, j, _ in self.edges:
            nb[i].append(j)
            nb[j].append(i)
        return tuple(tuple(sorted(n)) for n in nb)

    @cached_property
    def directed(self):
        """
        Directed readings ``(receiver, sender, weight)`` as three arrays.

        Every undirected edge yields two readings. The order is fixed
        (receiver-major, then sender) so reductions are reproducible.
        """
        rows = sorted((i, j, self.adjacency[i, j]) for i in range(self.n_nodes) for j in self.neighbors[i])
        if not rows:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        recv, send, w = zip(*rows)
        return np.array(recv), np.array(send), np.array(w)

    @property
    def max_weight(self):
        return max((w for _, _, w in self.edges), default=0.0)

    def relabel(self, perm):
        """Return the graph with node ``k`` renamed to ``perm[k]``."""
        return Network(self.n_nodes, tuple((perm[i], perm[j], w) for i, j, w in self.edges))


@dataclass(frozen=True)
class SpectralInfo:
    lambda2: float
    eigenvalues: np.ndarray


def connectivity_check(net):
    """
    Test whether ``net`` is connected.

    Returns
    -------
    connected : bool
    labels : ndarray of int
        Component label per node; labels are assigned in order of the
        smallest node of each component.
    """
    labels = -np.ones(net.n_nodes, dtype=int)
    current = 0
    for root in range(net.n_nodes):
        if labels[root] >= 0:
            continue
        stack = [root]
        labels[root] = current
        while stack:
            u = stack.pop()
            for v in net.neighbors[u]:
                if labels[v] < 0:
                    labels[v] = current
                    stack.append(v)
        current += 1
    return current == 1, labels


def components(net):
    """Node sets of the connected components, as sorted lists."""
    _, labels = connectivity_check(net)
    return [sorted(np.flatnonzero(labels == c).tolist()) for c in range(labels.max() + 1)]


def require_connected(net):
    connected, _ = connectivity_check(net)
    if not connected:
        comps = components(net)
        # report 1-based like the config
        shown = ", ".join("{" + ",".join(str(k + 1) for k in c) + "}" for c in comps)
        raise GraphError(f"graph is disconnected; components: {shown}")


def build_incidence(net):
    """
    Weighted incidence matrix ``B0`` of shape ``(N, m)``.

    Column ``k`` for edge ``{i, j}`` with ``i < j`` holds ``+a_ij`` at row
    ``i`` and ``-a_ij`` at row ``j``.
    """
    require_connected(net)
    B0 = np.zeros((net.n_nodes, net.n_edges))
    for k, (i, j, w) in enumerate(net.edges):
        B0[i, k] = w
        B0[j, k] = -w
    return B0


def lambda2_pos(B0, tol=TOL_EIG):
    """Smallest eigenvalue of ``B0.T @ B0`` exceeding ``tol``."""
    B0 = np.asarray(B0, dtype=float)
    if B0.size == 0:
        raise GraphError("graph spectrally degenerate")
    ev = np.linalg.eigvalsh(B0.T @ B0)
    positive = ev[ev > tol]
    if positive.size == 0:
        raise GraphError("graph spectrally degenerate")
    return SpectralInfo(lambda2=float(positive.min()), eigenvalues=ev)


def ring_with_chords(n_nodes, chord=3):
    """
    Circulant graph with unit weights: ring edges plus chords ``i -- i+chord``.

    With ``n_nodes=12`` and ``chord=3`` this is the builtin 12-agent network.
    """
    pairs = set()
    for i in range(n_nodes):
        for k in (1, chord):
            j = (i + k) % n_nodes
            if i != j:
                pairs.add((min(i, j), max(i, j)))
    return Network(n_nodes, tuple((i, j, 1.0) for i, j in sorted(pairs)))


def cycle(n_nodes):
    return Network(n_nodes, tuple((min(i, (i + 1) % n_nodes), max(i, (i + 1) % n_nodes), 1.0)
                                  for i in range(n_nodes)))


BUILTIN_NETWORKS = {
    "ring_chords_12": lambda: ring_with_chords(12, 3),
    "cycle_4": lambda: cycle(4),
    "single": lambda: Network(1),
}
