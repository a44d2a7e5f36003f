"""Directed acyclic graphs and d-separation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

Vertex = Hashable

HEAD_TO_TAIL = "head-to-tail"
TAIL_TO_TAIL = "tail-to-tail"
HEAD_TO_HEAD = "head-to-head"


class DagError(ValueError):
    pass


@dataclass(frozen=True)
class Dag:
    vertices: frozenset
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "vertices", frozenset(self.vertices))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        for a, b in self.edges:
            if a not in self.vertices or b not in self.vertices:
                raise DagError(f"edge ({a}, {b}) uses an unknown vertex")
            if a == b:
                raise DagError(f"self-loop at {a}")
        self.topological_order  # raises on cycles

    @cached_property
    def children(self) -> dict:
        out = {v: set() for v in self.vertices}
        for a, b in self.edges:
            out[a].add(b)
        return out

    @cached_property
    def parents(self) -> dict:
        out = {v: set() for v in self.vertices}
        for a, b in self.edges:
            out[b].add(a)
        return out

    @cached_property
    def topological_order(self) -> tuple:
        indeg = {v: 0 for v in self.vertices}
        for _, b in self.edges:
            indeg[b] += 1
        ready = sorted((v for v, d in indeg.items() if d == 0), key=repr)
        order = []
        while ready:
            v = ready.pop()
            order.append(v)
            for w in sorted(self.children[v], key=repr):
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        if len(order) != len(self.vertices):
            raise DagError("graph has a directed cycle")
        return tuple(order)

    @cached_property
    def _desc(self) -> dict:
        out = {}
        for v in reversed(self.topological_order):
            d = {v}
            for w in self.children[v]:
                d |= out[w]
            out[v] = frozenset(d)
        return out

    def adjacent(self, a, b) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges

    def dump(self) -> str:
        lines = [f"node {v}" for v in sorted(self.vertices, key=repr)]
        lines += [f"edge {a} {b}" for a, b in sorted(self.edges, key=repr)]
        return "\n".join(lines) + "\n"


def _check_vertices(G: Dag, X: Iterable) -> frozenset:
    X = frozenset(X)
    unknown = X - G.vertices
    if unknown:
        raise DagError(f"unknown vertices {sorted(unknown, key=repr)}")
    return X


def descendants(G: Dag, X: Iterable) -> frozenset:
    X = _check_vertices(G, X)
    out = set()
    for x in X:
        out |= G._desc[x]
    return frozenset(out)


def is_trail(G: Dag, t: Sequence) -> bool:
    return len(t) >= 1 and all(v in G.vertices for v in t) and all(
        G.adjacent(a, b) for a, b in zip(t, t[1:])
    )


def classify(G: Dag, t: Sequence, i: int) -> str:
    """Kind of the interior position ``i`` (0-based) of trail ``t``."""
    if not 1 <= i <= len(t) - 2:
        raise DagError(f"position {i} is not interior to a trail of length {len(t)}")
    prev, v, nxt = t[i - 1], t[i], t[i + 1]
    into_from_prev = (prev, v) in G.edges
    into_from_next = (nxt, v) in G.edges
    if into_from_prev and into_from_next:
        return HEAD_TO_HEAD
    if not into_from_prev and not into_from_next:
        return TAIL_TO_TAIL
    return HEAD_TO_TAIL


def is_blocked(G: Dag, t: Sequence, Z: Iterable) -> bool:
    Z = frozenset(Z)
    for i in range(1, len(t) - 1):
        kind = classify(G, t, i)
        if kind == HEAD_TO_HEAD:
            if not G._desc[t[i]] & Z:
                return True
        elif t[i] in Z:
            return True
    return False


def d_separated(G: Dag, X: Iterable, Y: Iterable, Z: Iterable) -> bool:
    """Reachability over (vertex, direction) states; linear in the graph."""
    X, Y, Z = (_check_vertices(G, S) for S in (X, Y, Z))
    if not (X & Y) <= Z:
        return False
    sources, targets = X - Z, Y - Z
    if not sources or not targets:
        return True
    anc_z = set()  # vertices with a descendant in Z
    for v in G.vertices:
        if G._desc[v] & Z:
            anc_z.add(v)
    # state (v, up): arrived at v from a child (up=True) or from a parent
    seen = set()
    queue = deque((x, True) for x in sources)
    reached = set()
    while queue:
        v, up = queue.popleft()
        if (v, up) in seen:
            continue
        seen.add((v, up))
        if v not in Z:
            reached.add(v)
        if up:
            if v in Z:
                continue
            queue.extend((p, True) for p in G.parents[v])
            queue.extend((c, False) for c in G.children[v])
        else:
            if v not in Z:
                queue.extend((c, False) for c in G.children[v])
            if v in anc_z:
                queue.extend((p, True) for p in G.parents[v])
    return not (reached & targets)


def active_trails(G: Dag, X: Iterable, Y: Iterable, Z: Iterable, *, max_visits: int = 2):
    """Yield unblocked trails from ``X`` to ``Y`` with no vertex used more than ``max_visits`` times."""
    X, Y, Z = (_check_vertices(G, S) for S in (X, Y, Z))
    nbrs = {v: sorted(G.children[v] | G.parents[v], key=repr) for v in G.vertices}
    for x in sorted(X, key=repr):
        counts = {x: 1}
        trail = [x]

        def extend():
            v = trail[-1]
            if len(trail) > 1 and v in Y:
                yield tuple(trail)
            for w in nbrs[v]:
                if counts.get(w, 0) >= max_visits:
                    continue
                if len(trail) >= 2 and is_blocked(G, trail[-2:] + [w], Z):
                    continue
                trail.append(w)
                counts[w] = counts.get(w, 0) + 1
                yield from extend()
                counts[w] -= 1
                trail.pop()

        if x in Y:
            yield (x,)
        yield from extend()


def d_separated_oracle(G: Dag, X: Iterable, Y: Iterable, Z: Iterable, *, max_visits: int = 2) -> bool:
    """Exhaustive trail enumeration: every trail from X\\Z to Y\\Z is blocked."""
    X, Y, Z = (_check_vertices(G, S) for S in (X, Y, Z))
    if not (X & Y) <= Z:
        return False
    for _ in active_trails(G, X - Z, Y - Z, Z, max_visits=max_visits):
        return False
    return True


def parse_dag(text: str) -> Dag:
    vertices, edges = set(), set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if toks[0] == "node" and len(toks) == 2:
            vertices.add(toks[1])
        elif toks[0] == "edge" and len(toks) == 3:
            edges.add((toks[1], toks[2]))
        else:
            raise DagError(f"line {lineno}: expected 'node <id>' or 'edge <from> <to>'")
    for a, b in edges:
        if a not in vertices or b not in vertices:
            raise DagError(f"edge ({a}, {b}) uses an undeclared node")
    return Dag(frozenset(vertices), frozenset(edges))


def random_dag(rng, n: int, p: float) -> Dag:
    """Random DAG on ``0..n-1`` with edges oriented along a random order."""
    order = list(range(n))
    rng.shuffle(order)
    edges = {(order[i], order[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p}
    return Dag(frozenset(range(n)), frozenset(edges))
