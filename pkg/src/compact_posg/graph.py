"""Lateral-movement network model.

Vertices are labelled ``1..n`` in topological order; the attacker starts in
vertex 1 and tries to reach vertex ``n``.  Edges are ``(i, j)`` pairs with
``i < j``.  A path is stored as the tuple of vertices it visits, always ending
in ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

Edge = Tuple[int, int]
Path = Tuple[int, ...]

DEFAULT_MAX_PATHS = 200_000


class GraphError(ValueError):
    """Raised for malformed graphs or invalid graph operations."""


@dataclass(frozen=True)
class LayeredDag:
    n: int
    edges: Tuple[Edge, ...]
    normal_cost: Dict[Edge, Fraction] = field(hash=False)
    honeypot_cost: Dict[Edge, Fraction] = field(hash=False)

    def __post_init__(self):
        if self.n < 2:
            raise GraphError(f"need at least 2 vertices, got {self.n}")
        seen = set()
        for (i, j) in self.edges:
            if not (1 <= i < j <= self.n):
                raise GraphError(f"edge ({i},{j}) is not a forward edge over 1..{self.n}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
            c, cbar = self.normal_cost.get((i, j)), self.honeypot_cost.get((i, j))
            if c is None or cbar is None:
                raise GraphError(f"edge ({i},{j}) is missing a cost")
            if c <= 0 or cbar <= 0:
                raise GraphError(f"edge ({i},{j}) has a non-positive cost")
            if cbar < c:
                raise GraphError(f"edge ({i},{j}): honeypot cost {cbar} below normal cost {c}")
        for i in range(1, self.n):
            if (i, i + 1) not in seen:
                raise GraphError(f"chain edge ({i},{i + 1}) is missing")

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    def successors(self, v: int) -> List[int]:
        return sorted(j for (i, j) in self.edges if i == v)

    def is_chain(self) -> bool:
        return len(self.edges) == self.n - 1

    def C(self, e: Edge) -> Fraction:
        return self.normal_cost[e]

    def Cbar(self, e: Edge) -> Fraction:
        return self.honeypot_cost[e]


def make_dag(n: int, edges: Iterable[Edge], normal_cost=None, honeypot_cost=None) -> LayeredDag:
    """Build a DAG; missing costs default to the layered scheme
    ``C(i,j) = j - i`` and ``Cbar(i,j) = j * (j - i)``."""
    edges = tuple(sorted(tuple(e) for e in edges))
    normal_cost = dict(normal_cost or {})
    honeypot_cost = dict(honeypot_cost or {})
    for (i, j) in edges:
        normal_cost.setdefault((i, j), Fraction(j - i))
        honeypot_cost.setdefault((i, j), Fraction(j * (j - i)))
    return LayeredDag(n, edges,
                      {e: Fraction(normal_cost[e]) for e in edges},
                      {e: Fraction(honeypot_cost[e]) for e in edges})


def chain(n: int) -> LayeredDag:
    return make_dag(n, [(i, i + 1) for i in range(1, n)])


def generate_instance(n: int, p: float, seed) -> LayeredDag:
    """Random layered DAG: chain edges always, every other forward pair with
    probability ``p``.  Pairs are drawn in lexicographic order from a numpy
    generator seeded by ``seed``, so the output is reproducible."""
    if n < 2:
        raise GraphError(f"need at least 2 vertices, got {n}")
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(1, n)]
    for i in range(1, n + 1):
        for j in range(i + 2, n + 1):
            if rng.random() < p:
                edges.append((i, j))
    return make_dag(n, edges)


# -- paths -------------------------------------------------------------------

def path_edges(path: Sequence[int]) -> List[Edge]:
    return [(path[k], path[k + 1]) for k in range(len(path) - 1)]


def enumerate_paths(g: LayeredDag, max_paths: int = DEFAULT_MAX_PATHS) -> Dict[int, List[Path]]:
    """All paths to vertex ``n`` keyed by start vertex (``1..n-1``), each list in
    lexicographic order of vertex sequences."""
    suffixes: Dict[int, List[Path]] = {g.n: [(g.n,)]}
    total = 0
    for v in range(g.n - 1, 0, -1):
        paths = []
        for w in g.successors(v):
            paths.extend((v,) + tail for tail in suffixes[w])
        paths.sort()
        suffixes[v] = paths
        total += len(paths)
        if total > max_paths:
            raise GraphError(f"more than {max_paths} paths; instance too large for exhaustive enumeration")
    return {v: suffixes[v] for v in range(1, g.n)}


def all_paths(g: LayeredDag, max_paths: int = DEFAULT_MAX_PATHS) -> List[Path]:
    by_start = enumerate_paths(g, max_paths)
    return [p for v in sorted(by_start) for p in by_start[v]]


def path_cost(path: Path, g: LayeredDag) -> Fraction:
    return sum((g.C(e) for e in path_edges(path)), Fraction(0))


def prefix_until(path: Path, h: Edge) -> List[Edge]:
    """Edges of ``path`` up to and including ``h``; the whole path if ``h`` is not on it."""
    edges = path_edges(path)
    if h in edges:
        return edges[:edges.index(h) + 1]
    return edges


def stage_cost(path: Path, h: Edge, g: LayeredDag) -> Fraction:
    cost = sum((g.C(e) for e in prefix_until(path, h)), Fraction(0))
    if h in path_edges(path):
        cost += g.Cbar(h) - g.C(h)
    return cost


def infection_update(infection: Iterable[int], path: Path, h: Edge) -> frozenset:
    infection = frozenset(infection)
    if path[0] not in infection:
        raise GraphError(f"path starts in {path[0]}, which is not infected")
    return infection | {v for (_, v) in prefix_until(path, h)}


def shortest_costs(g: LayeredDag, which: str = "normal") -> List[Fraction]:
    """Cheapest cost from each vertex to ``n`` (index ``v - 1``)."""
    if which not in ("normal", "honeypot"):
        raise ValueError(f"unknown cost kind {which!r}")
    cost = g.normal_cost if which == "normal" else g.honeypot_cost
    best: List[Fraction] = [Fraction(0)] * g.n
    for v in range(g.n - 1, 0, -1):
        best[v - 1] = min(cost[(v, w)] + best[w - 1] for w in g.successors(v))
    return best


def chain_oracle(g: LayeredDag) -> Fraction:
    """Game value of a pure chain by backward recursion over the frontier.

    On a chain the defender always knows the frontier, the attacker walks the
    suffix from it, and the defender picks the edge whose detection is most
    costly for the attacker.
    """
    if not g.is_chain():
        raise GraphError("chain_oracle requires a pure chain instance")
    n = g.n
    W = [Fraction(0)] * (n + 1)
    for k in range(n - 1, 0, -1):
        best = None
        walked = Fraction(0)
        for i in range(k, n):
            e = (i, i + 1)
            cand = walked + g.Cbar(e) + (W[i + 1] if i + 1 < n else 0)
            best = cand if best is None else max(best, cand)
            walked += g.C(e)
        W[k] = best
    return W[1]


# -- instance files ----------------------------------------------------------

def _fmt(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def dumps_instance(g: LayeredDag, comment: str = "") -> str:
    lines = [f"# {line}" for line in comment.splitlines()]
    lines.append(str(g.n))
    for e in g.edges:
        lines.append(f"{e[0]} {e[1]} {_fmt(g.C(e))} {_fmt(g.Cbar(e))}")
    return "\n".join(lines) + "\n"


def loads_instance(text: str) -> LayeredDag:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows or len(rows[0]) != 1:
        raise GraphError("first non-comment line must hold the vertex count")
    try:
        n = int(rows[0][0])
        edges, C, Cbar = [], {}, {}
        for row in rows[1:]:
            if len(row) != 4:
                raise GraphError(f"expected 'i j C Cbar', got {' '.join(row)!r}")
            e = (int(row[0]), int(row[1]))
            edges.append(e)
            C[e], Cbar[e] = Fraction(row[2]), Fraction(row[3])
    except ValueError as exc:
        if isinstance(exc, GraphError):
            raise
        raise GraphError(f"malformed instance: {exc}") from exc
    if len(set(edges)) != len(edges):
        raise GraphError("duplicate edge in instance file")
    return LayeredDag(n, tuple(sorted(edges)), C, Cbar)


def save_instance(g: LayeredDag, path, comment: str = "") -> None:
    FsPath(path).write_text(dumps_instance(g, comment))


def load_instance(path) -> LayeredDag:
    return loads_instance(FsPath(path).read_text())
