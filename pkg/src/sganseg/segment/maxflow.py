"""s-t maximum flow / minimum cut (Dinic's algorithm)."""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import ParameterError


class FlowGraph:
    """Directed graph over ``n`` inner nodes plus a source and a sink.

    Inner nodes are ``0..n-1``; the source is ``n`` and the sink ``n + 1``.
    Every arc is stored with its reverse arc (arc ``e`` and ``e ^ 1``).
    """

    def __init__(self, n: int):
        if n < 0:
            raise ParameterError("node count must be >= 0")
        self.n = n
        self.source = n
        self.sink = n + 1
        self.head: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n + 2)]

    @property
    def n_nodes(self) -> int:
        return self.n + 2

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        if cap < 0 or rev_cap < 0:
            raise ParameterError("capacities must be non-negative")
        e = len(self.head)
        self.head += [v, u]
        self.cap += [float(cap), float(rev_cap)]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)

    def add_tedge(self, i: int, cap_source: float, cap_sink: float) -> None:
        """Terminal links source -> i and i -> sink."""
        if cap_source:
            self.add_edge(self.source, i, cap_source)
        if cap_sink:
            self.add_edge(i, self.sink, cap_sink)

    def add_edges(self, us, vs, caps, rev_caps=None) -> None:
        rev_caps = np.zeros(len(caps)) if rev_caps is None else rev_caps
        for u, v, c, r in zip(np.asarray(us).tolist(), np.asarray(vs).tolist(),
                              np.asarray(caps, float).tolist(), np.asarray(rev_caps, float).tolist()):
            self.add_edge(u, v, c, r)


def _bfs(g: FlowGraph, cap: list[float], tol: float) -> list[int] | None:
    level = [-1] * g.n_nodes
    level[g.source] = 0
    q = deque([g.source])
    head, adj = g.head, g.adj
    while q:
        u = q.popleft()
        lu = level[u] + 1
        for e in adj[u]:
            v = head[e]
            if level[v] < 0 and cap[e] > tol:
                level[v] = lu
                q.append(v)
    return level if level[g.sink] >= 0 else None


def _blocking_flow(g: FlowGraph, cap: list[float], level: list[int], tol: float) -> float:
    head, adj = g.head, g.adj
    s, t = g.source, g.sink
    it = [0] * g.n_nodes
    total = 0.0
    while True:
        # iterative DFS along level-increasing arcs; path holds arc ids
        path: list[int] = []
        u = s
        while u != t:
            edges = adj[u]
            i = it[u]
            lu = level[u] + 1
            while i < len(edges):
                e = edges[i]
                if cap[e] > tol and level[head[e]] == lu:
                    break
                i += 1
            it[u] = i
            if i == len(edges):
                if u == s:
                    return total
                level[u] = -1  # dead end for the rest of this phase
                e = path.pop()
                u = head[e ^ 1]
                it[u] += 1
                continue
            path.append(edges[i])
            u = head[edges[i]]
        f = min(cap[e] for e in path)
        for e in path:
            cap[e] -= f
            cap[e ^ 1] += f
        total += f


def max_flow(g: FlowGraph, tol: float | None = None) -> tuple[float, np.ndarray]:
    """Maximum s-t flow value and the minimum cut.

    The cut is a boolean array over all ``n + 2`` nodes, True for nodes on the
    source side (reachable from the source in the residual graph).  ``tol`` is
    the residual capacity treated as zero; by default a tiny fraction of the
    largest capacity, so integer graphs are solved exactly.
    """
    cap = list(g.cap)
    if tol is None:
        tol = 1e-12 * max(cap, default=0.0)
    flow = 0.0
    while True:
        level = _bfs(g, cap, tol)
        if level is None:
            break
        flow += _blocking_flow(g, cap, level, tol)
    seen = np.zeros(g.n_nodes, dtype=bool)
    seen[g.source] = True
    q = deque([g.source])
    while q:
        u = q.popleft()
        for e in g.adj[u]:
            v = g.head[e]
            if not seen[v] and cap[e] > tol:
                seen[v] = True
                q.append(v)
    g.residual = cap
    return flow, seen


def cut_capacity(g: FlowGraph, side: np.ndarray) -> float:
    """Total original capacity of arcs leaving the source side."""
    total = 0.0
    for e in range(0, len(g.head)):
        u, v = g.head[e ^ 1], g.head[e]
        if side[u] and not side[v]:
            total += g.cap[e]
    return total
