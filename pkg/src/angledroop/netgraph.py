"""Converter network graphs with incidence and weighted Laplacian operators."""

from __future__ import annotations

from collections import deque

import numpy as np


class NetworkGraph:
    """Connected graph of converter buses joined by inductive lines.

    Nodes are indexed ``0 .. n-1``. Every edge ``(k, j)`` is stored with
    ``k < j`` and carries a strictly positive per-unit susceptance. Fixing the
    orientation by ``k < j`` makes the incidence matrix deterministic; the
    Laplacian and every power-flow expression built from it are independent of
    that choice. Instances are immutable after construction.
    """

    def __init__(self, n, edges, susceptances):
        n = int(n)
        if n < 1:
            raise ValueError("node count must be >= 1")
        raw = [(int(k), int(j)) for k, j in edges]
        sus = np.array(susceptances, dtype=float).reshape(-1)
        if sus.shape != (len(raw),):
            raise ValueError("need exactly one susceptance per edge")
        if not np.all(np.isfinite(sus)) or np.any(sus <= 0.0):
            raise ValueError("susceptances must be finite and strictly positive")
        norm = []
        seen = set()
        for k, j in raw:
            if not (0 <= k < n and 0 <= j < n):
                raise ValueError(f"edge ({k}, {j}) references a node outside 0..{n - 1}")
            if k == j:
                raise ValueError(f"self-loop at node {k}")
            pair = (k, j) if k < j else (j, k)
            if pair in seen:
                raise ValueError(f"duplicate edge {pair}")
            seen.add(pair)
            norm.append(pair)
        self.n = n
        self.edges = tuple(norm)
        self.susceptances = sus
        self.susceptances.flags.writeable = False
        self._check_connected()

    @property
    def m(self) -> int:
        return len(self.edges)

    def _check_connected(self):
        adj = [[] for _ in range(self.n)]
        for k, j in self.edges:
            adj[k].append(j)
            adj[j].append(k)
        seen = [False] * self.n
        seen[0] = True
        queue = deque([0])
        while queue:
            k = queue.popleft()
            for j in adj[k]:
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        if not all(seen):
            raise ValueError("graph is not connected")

    def __repr__(self):
        return f"NetworkGraph(n={self.n}, m={self.m})"


def incidence_matrix(graph) -> np.ndarray:
    """Node-edge incidence matrix, +1 at the lower-indexed endpoint of each edge."""
    b = np.zeros((graph.n, graph.m))
    for e, (k, j) in enumerate(graph.edges):
        b[k, e] = 1.0
        b[j, e] = -1.0
    return b


def weighted_laplacian(graph) -> np.ndarray:
    """Susceptance-weighted Laplacian B diag(b) B^T (symmetric PSD, zero row sums)."""
    b = incidence_matrix(graph)
    return (b * graph.susceptances) @ b.T


def laplacian_eigenvalues(graph) -> np.ndarray:
    """Ascending Laplacian eigenvalues.

    The first is zero (within rounding) and, for a connected graph, the second
    is strictly positive. Eigensolver failures surface as
    numpy.linalg.LinAlgError.
    """
    return np.linalg.eigvalsh(weighted_laplacian(graph))


def security_check(graph, theta) -> bool:
    """True iff every line angle difference lies strictly inside (-pi/2, pi/2).

    Inside this region the line power flows are monotone in the angle
    differences, which keeps the power-balance Jacobian positive definite.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (graph.n,):
        raise ValueError(f"theta must have length {graph.n}")
    diffs = incidence_matrix(graph).T @ theta
    return bool(np.all(np.abs(diffs) < 0.5 * np.pi))


def path_graph(n, susceptance=1.0) -> NetworkGraph:
    edges = [(k, k + 1) for k in range(n - 1)]
    return NetworkGraph(n, edges, [susceptance] * len(edges))


def ring_graph(n, susceptance=1.0) -> NetworkGraph:
    if n < 3:
        raise ValueError("ring graph needs at least 3 nodes")
    edges = [(k, k + 1) for k in range(n - 1)] + [(0, n - 1)]
    return NetworkGraph(n, edges, [susceptance] * len(edges))


def complete_graph(n, susceptance=1.0) -> NetworkGraph:
    edges = [(k, j) for k in range(n) for j in range(k + 1, n)]
    return NetworkGraph(n, edges, [susceptance] * len(edges))
