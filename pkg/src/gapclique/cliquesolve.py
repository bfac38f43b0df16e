"""Exact and heuristic clique search, used as the ground-truth oracle for the
soundness experiments.

The exact solver is branch-and-bound with greedy-coloring upper bounds over
bitset candidate sets (adjacency rows are Python ints used as bitmasks),
with vertices pre-ordered by degeneracy.  Deterministic: with no time budget
the reported optimum never depends on anything but the graph.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from typing import Optional

from .errors import BudgetExceeded, ContractViolation

DEFAULT_VERTEX_CAP = 2000


@dataclass(frozen=True)
class DenseGraph:
    """Undirected graph as per-vertex adjacency bitmasks; no self-loops."""

    n: int
    adj: tuple[int, ...]
    labels: Optional[tuple] = None

    def __post_init__(self):
        if len(self.adj) != self.n:
            raise ContractViolation("adjacency length mismatch")
        full = (1 << self.n) - 1
        for v, row in enumerate(self.adj):
            if row >> self.n:
                raise ContractViolation("adjacency bits out of range")
            if (row >> v) & 1:
                raise ContractViolation(f"self-loop at vertex {v}")
        if self.labels is not None and len(self.labels) != self.n:
            raise ContractViolation("labels length mismatch")

    @classmethod
    def from_edges(cls, n: int, edges, labels=None) -> "DenseGraph":
        adj = [0] * n
        for u, v in edges:
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise ContractViolation(f"bad edge ({u}, {v})")
            adj[u] |= 1 << v
            adj[v] |= 1 << u
        return cls(n, tuple(adj), tuple(labels) if labels is not None else None)

    def has_edge(self, u: int, v: int) -> bool:
        return bool((self.adj[u] >> v) & 1)

    def edges(self):
        for u in range(self.n):
            row = self.adj[u] >> (u + 1)
            v = u + 1
            while row:
                if row & 1:
                    yield (u, v)
                row >>= 1
                v += 1

    def edge_count(self) -> int:
        return sum(row.bit_count() for row in self.adj) // 2

    def degree(self, v: int) -> int:
        return self.adj[v].bit_count()

    def validate_symmetric(self):
        for u in range(self.n):
            for v in range(u + 1, self.n):
                if ((self.adj[u] >> v) & 1) != ((self.adj[v] >> u) & 1):
                    raise ContractViolation(f"asymmetric adjacency at ({u}, {v})")


def is_clique(graph: DenseGraph, vertices) -> bool:
    """True iff every pair of distinct listed vertices is adjacent."""
    vs = sorted(set(vertices))
    for v in vs:
        if not (0 <= v < graph.n):
            raise ContractViolation(f"vertex {v} out of range")
    mask = 0
    for v in vs:
        mask |= 1 << v
    for v in vs:
        if mask & ~(graph.adj[v] | (1 << v)):
            return False
    return True


@dataclass(frozen=True)
class CliqueSearchResult:
    vertices: tuple[int, ...]
    size: int
    optimal: bool
    nodes: int
    elapsed: float


def _degeneracy_order(graph: DenseGraph) -> list[int]:
    """Repeatedly remove a minimum-degree vertex; returns removal order."""
    n = graph.n
    alive = (1 << n) - 1
    order = []
    for _ in range(n):
        best_v, best_d = -1, n + 1
        rest = alive
        while rest:
            v = (rest & -rest).bit_length() - 1
            rest &= rest - 1
            d = (graph.adj[v] & alive).bit_count()
            if d < best_d:
                best_v, best_d = v, d
        order.append(best_v)
        alive &= ~(1 << best_v)
    return order


class _TimeUp(Exception):
    pass


def max_clique_exact(
    graph: DenseGraph,
    time_budget: Optional[float] = None,
    vertex_cap: int = DEFAULT_VERTEX_CAP,
) -> CliqueSearchResult:
    """Exact maximum clique by branch and bound.

    When the optimality flag is set the returned size is the clique number;
    on time-budget exhaustion the best clique found so far is returned with
    the flag cleared.
    """
    n = graph.n
    if n > vertex_cap:
        raise BudgetExceeded("vertex count", required=n, budget=vertex_cap)
    if n == 0:
        return CliqueSearchResult((), 0, True, 0, 0.0)
    start = time.monotonic()
    deadline = None if time_budget is None else start + time_budget

    # relabel along the reversed degeneracy order: dense cores come first
    order = _degeneracy_order(graph)[::-1]
    pos = {v: i for i, v in enumerate(order)}
    adj = [0] * n
    for v in range(n):
        row = graph.adj[v]
        new = 0
        while row:
            u = (row & -row).bit_length() - 1
            row &= row - 1
            new |= 1 << pos[u]
        adj[pos[v]] = new

    best: list[int] = [0]
    best_size = 1
    nodes = 0
    aborted = False

    def color_sort(cand: int) -> list[tuple[int, int]]:
        out = []
        color = 0
        rest = cand
        while rest:
            color += 1
            avail = rest
            while avail:
                v = (avail & -avail).bit_length() - 1
                out.append((v, color))
                avail &= ~adj[v] & ~(1 << v)
                rest &= ~(1 << v)
        return out

    def expand(stack: list[int], cand: int):
        nonlocal best, best_size, nodes
        nodes += 1
        if deadline is not None and time.monotonic() > deadline:
            raise _TimeUp
        for v, color in reversed(color_sort(cand)):
            if len(stack) + color <= best_size:
                return
            stack.append(v)
            nxt = cand & adj[v]
            if nxt:
                expand(stack, nxt)
            elif len(stack) > best_size:
                best = stack.copy()
                best_size = len(stack)
            stack.pop()
            cand &= ~(1 << v)

    try:
        expand([], (1 << n) - 1)
        optimal = True
    except _TimeUp:
        optimal = False
        aborted = True
    elapsed = time.monotonic() - start
    clique = tuple(sorted(order[i] for i in best))
    if not clique and n > 0:
        clique = (0,)
    return CliqueSearchResult(clique, len(clique), optimal and not aborted, nodes, elapsed)


def greedy_clique(
    graph: DenseGraph, restarts: int = 50, rng: Optional[random.Random] = None
) -> CliqueSearchResult:
    """Randomized greedy: per restart, scan a random vertex order and keep
    every vertex compatible with the clique so far.  Output always passes
    is_clique; size is at most the exact optimum."""
    if graph.n == 0:
        return CliqueSearchResult((), 0, False, 0, 0.0)
    if rng is None:
        rng = random.Random(0)
    start = time.monotonic()
    best: list[int] = [0]
    order = list(range(graph.n))
    for _ in range(max(1, restarts)):
        rng.shuffle(order)
        clique: list[int] = []
        cand = (1 << graph.n) - 1
        for v in order:
            if (cand >> v) & 1:
                clique.append(v)
                cand &= graph.adj[v]
        if len(clique) > len(best):
            best = clique
    return CliqueSearchResult(
        tuple(sorted(best)), len(best), False, 0, time.monotonic() - start
    )


# -- format readers (writers live with the reduction's export path) -----------


def read_dimacs(path) -> DenseGraph:
    """Read the 'p edge N M' / 'e u v' format with 1-indexed vertices."""
    n = None
    edges = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("c"):
                continue
            parts = line.split()
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] != "edge":
                    raise ContractViolation(f"bad problem line: {line!r}")
                n = int(parts[2])
            elif parts[0] == "e":
                u, v = int(parts[1]), int(parts[2])
                edges.append((u - 1, v - 1))
    if n is None:
        raise ContractViolation("missing problem line")
    return DenseGraph.from_edges(n, edges)


def read_graph_json(path) -> tuple[DenseGraph, dict]:
    """Read the JSON graph format; returns the graph and its metadata."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ContractViolation(f"unsupported graph version {doc.get('version')}")
    graph = DenseGraph.from_edges(doc["n"], [tuple(e) for e in doc["edges"]])
    return graph, doc.get("meta", {})
