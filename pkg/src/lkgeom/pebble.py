"""k-variable types by set-based refinement of k-tuple spaces, plus a pebble-game oracle."""

from __future__ import annotations

import hashlib
import itertools
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core import FiniteStructure, StructureError, atomic_type, pad_k

TUPLE_SPACE_CAP = 2_000_000
GAME_POSITION_CAP = 5_000_000


class RefinementError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KTypePartition:
    """Stable coloring of the k-tuple spaces of one or more structures.

    ``colorings[s]`` is an int array of shape ``(n_s,) * k``; colors are
    shared across all structures of one run.
    """

    k: int
    structures: tuple[FiniteStructure, ...]
    colorings: tuple[np.ndarray, ...]
    class_count: int
    stage_count: int
    traces: tuple[str, ...]  # per class id: digest of its color history

    def color(self, tup: Sequence[int], s: int = 0) -> int:
        return int(self.colorings[s][tuple(tup)])

    def realized(self, s: int = 0) -> frozenset[int]:
        return frozenset(np.unique(self.colorings[s]).tolist())

    def tuples(self, s: int = 0):
        n = self.structures[s].size
        return itertools.product(range(n), repeat=self.k)

    def representative(self, cls: int, s: int | None = None) -> tuple[int, tuple[int, ...]]:
        order = range(len(self.structures)) if s is None else [s]
        for i in order:
            hits = np.argwhere(self.colorings[i] == cls)
            if len(hits):
                return i, tuple(int(x) for x in hits[0])
        raise KeyError(cls)

    def dump(self, s: int = 0) -> str:
        lines = [f"class {c} {self.traces[c]}" for c in sorted(self.realized(s))]
        for tup in self.tuples(s):
            lines.append("tuple " + " ".join(map(str, tup)) + f" {self.color(tup, s)}")
        return "\n".join(lines) + "\n"


def _check_k(M: FiniteStructure, k: int, allow_large: bool):
    if k < 1:
        raise RefinementError("k must be positive")
    if k < M.signature.max_arity:
        raise RefinementError(f"k={k} is below the maximum arity {M.signature.max_arity}")
    if M.size**k > TUPLE_SPACE_CAP and not allow_large:
        raise RefinementError(
            f"tuple space {M.size}^{k} exceeds the soft cap {TUPLE_SPACE_CAP}; pass allow_large=True"
        )


def _initial_rows(M: FiniteStructure, k: int) -> np.ndarray:
    n = M.size
    idx = np.indices((n,) * k).reshape(k, -1)
    cols = [idx[i] == idx[j] for i in range(k) for j in range(i + 1, k)]
    for name, arity in M.signature.relations:
        arr = M.arrays[name]
        for pos in itertools.product(range(k), repeat=arity):
            cols.append(arr[tuple(idx[p] for p in pos)])
    if not cols:
        return np.zeros((n**k, 0), dtype=bool)
    return np.stack(cols, axis=1)


def _renumber(rows: list[np.ndarray]) -> list[np.ndarray]:
    """Canonical ids for rows, jointly across the list (sorted row order)."""
    allrows = np.concatenate(rows, axis=0)
    if allrows.shape[1] == 0:
        inverse = np.zeros(len(allrows), dtype=np.int64)
    else:
        _, inverse = np.unique(allrows, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
    out, start = [], 0
    for r in rows:
        out.append(inverse[start:start + len(r)])
        start += len(r)
    return out


def _refine(structures: tuple[FiniteStructure, ...], k: int) -> KTypePartition:
    shapes = [(M.size,) * k for M in structures]
    colors = [c.reshape(shape) for c, shape in
              zip(_renumber([_initial_rows(M, k) for M in structures]), shapes)]
    history = [colors]
    count = int(max(c.max() for c in colors)) + 1
    while True:
        # per position i: the set of colors reachable by substituting coordinate i
        set_ids_per_pos = []
        for i in range(k):
            presence_rows = []
            for c in colors:
                n = c.shape[0]
                moved = np.moveaxis(c, i, -1).reshape(-1, n)
                pres = np.zeros((moved.shape[0], count), dtype=bool)
                pres[np.arange(moved.shape[0])[:, None], moved] = True
                presence_rows.append(pres)
            ids = _renumber(presence_rows)
            expanded = []
            for c, fiber_ids in zip(colors, ids):
                n = c.shape[0]
                other = fiber_ids.reshape((n,) * (k - 1))
                expanded.append(np.broadcast_to(np.expand_dims(other, axis=i), c.shape).reshape(-1))
            set_ids_per_pos.append(expanded)
        sig_rows = [
            np.stack([c.reshape(-1)] + [set_ids_per_pos[i][s] for i in range(k)], axis=1)
            for s, c in enumerate(colors)
        ]
        new = [r.reshape(shape) for r, shape in zip(_renumber(sig_rows), shapes)]
        new_count = int(max(c.max() for c in new)) + 1
        if new_count == count:
            break
        colors, count = new, new_count
        history.append(colors)

    traces: list[str] = [""] * count
    for s in range(len(structures)):
        flat = [h[s].reshape(-1) for h in history]
        for pos, cls in enumerate(flat[-1]):
            if not traces[cls]:
                chain = "/".join(str(int(f[pos])) for f in flat)
                traces[cls] = hashlib.sha1(chain.encode()).hexdigest()[:16]
    return KTypePartition(k, structures, tuple(colors), count, len(history), tuple(traces))


@lru_cache(maxsize=4096)
def _cached_refine(structures: tuple[FiniteStructure, ...], k: int) -> KTypePartition:
    return _refine(structures, k)


def refine_k_types(M: FiniteStructure, k: int, *, allow_large: bool = False) -> KTypePartition:
    """Stable coloring of ``M^k``; colors are ordered canonically."""
    _check_k(M, k, allow_large)
    return _cached_refine((M,), k)


def joint_k_types(M: FiniteStructure, N: FiniteStructure, k: int, *, allow_large: bool = False) -> KTypePartition:
    if M.signature != N.signature:
        raise StructureError("signature mismatch")
    _check_k(M, k, allow_large)
    _check_k(N, k, allow_large)
    return _cached_refine((M, N), k)


def k_equivalent(M: FiniteStructure, N: FiniteStructure, k: int) -> bool:
    part = joint_k_types(M, N, k)
    return part.realized(0) == part.realized(1)


def qf_type_of_class(part: KTypePartition, cls: int) -> str:
    s, tup = part.representative(cls)
    return atomic_type(part.structures[s], tup)


# -- pebble game -------------------------------------------------------------


def _partial_isos(M: FiniteStructure, N: FiniteStructure, k: int) -> set[frozenset]:
    rels = [(name, arity) for name, arity in M.signature.relations]

    def consistent(f: dict[int, int], a: int) -> bool:
        dom = list(f)
        for name, arity in rels:
            ms, ns = M.relation_sets[name], N.relation_sets[name]
            for tup in itertools.product(dom, repeat=arity):
                if a not in tup:
                    continue
                if (tup in ms) != (tuple(f[e] for e in tup) in ns):
                    return False
        return True

    positions: set[frozenset] = {frozenset()}
    layer = [frozenset()]
    for _ in range(k):
        nxt = set()
        for f in layer:
            fd = dict(f)
            used = set(fd.values())
            for a in M.universe:
                if a in fd:
                    continue
                for b in N.universe:
                    if b in used:
                        continue
                    g = dict(fd)
                    g[a] = b
                    if consistent(g, a):
                        nxt.add(frozenset(g.items()))
        positions |= nxt
        layer = list(nxt)
    return positions


def pebble_game_equivalent(
    M: FiniteStructure, N: FiniteStructure, k: int, *, cap: int = GAME_POSITION_CAP
) -> bool:
    """Decide the k-pebble game by a greatest-fixed-point computation.

    Positions are partial isomorphisms with at most ``k`` pairs.  A position
    survives when it has forth and back extensions (if fewer than ``k``
    pairs) and all its restrictions survive.
    """
    if M.signature != N.signature:
        raise StructureError("signature mismatch")
    if (M.size * N.size) ** k > cap:
        raise RefinementError(f"game positions ({M.size}*{N.size})^{k} exceed the cap {cap}")
    alive = _partial_isos(M, N, k)
    forth: dict[tuple[frozenset, int], int] = {}
    back: dict[tuple[frozenset, int], int] = {}
    for f in alive:
        if len(f) >= k:
            continue
        fd = dict(f)
        rng = set(fd.values())
        for a in M.universe:
            if a not in fd:
                forth[f, a] = 0
        for b in N.universe:
            if b not in rng:
                back[f, b] = 0
    for g in alive:
        for pair in g:
            h = g - {pair}
            forth[h, pair[0]] += 1
            back[h, pair[1]] += 1

    dead: set[frozenset] = set()
    queue: deque[frozenset] = deque()
    for key, v in list(forth.items()) + list(back.items()):
        if v == 0:
            queue.append(key[0])
    while queue:
        f = queue.popleft()
        if f in dead:
            continue
        dead.add(f)
        for pair in f:
            h = f - {pair}
            if h in dead:
                continue
            forth[h, pair[0]] -= 1
            back[h, pair[1]] -= 1
            if forth[h, pair[0]] == 0 or back[h, pair[1]] == 0:
                queue.append(h)
        if len(f) < k:
            fd = dict(f)
            rng = set(fd.values())
            for a in M.universe:
                if a in fd:
                    continue
                for b in N.universe:
                    if b in rng:
                        continue
                    g = f | {(a, b)}
                    if g in alive and g not in dead:
                        queue.append(g)
        if not f:
            return False
    return frozenset() not in dead


# -- diagrams ----------------------------------------------------------------


@dataclass(frozen=True)
class DiagK:
    """Colors of every <= k-tuple over a base set, indexed by base positions."""

    base: tuple[int, ...]
    k: int
    tuple_types: tuple[tuple[tuple[int, ...], int], ...]
    theory_class_set: frozenset[int]

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return dict(self.tuple_types)


def extract_diag_k(
    M: FiniteStructure, A: Iterable[int], k: int, *, partition: KTypePartition | None = None, index: int = 0
) -> DiagK:
    """Diagram of ``A`` in ``M``.

    Tuples are recorded by position in the sorted base, so diagrams of
    different sets compare under the order-preserving correspondence.  Pass
    a joint ``partition`` to compare across structures.
    """
    base = tuple(sorted(set(A)))
    if not base:
        raise StructureError("diagram base set must be nonempty")
    for e in base:
        if not 0 <= e < M.size:
            raise StructureError(f"element {e} out of range")
    if partition is None:
        partition = refine_k_types(M, k)
        index = 0
    items = []
    for length in range(1, k + 1):
        for pos in itertools.product(range(len(base)), repeat=length):
            tup = pad_k(tuple(base[p] for p in pos), k)
            items.append((pos, partition.color(tup, index)))
    return DiagK(base=tuple(range(len(base))), k=k, tuple_types=tuple(items),
                 theory_class_set=partition.realized(index))


def diagrams_agree(M: FiniteStructure, A: Iterable[int], N: FiniteStructure, B: Iterable[int], k: int) -> bool:
    if M.size == N.size and M == N:
        part = refine_k_types(M, k)
        return extract_diag_k(M, A, k, partition=part) == extract_diag_k(M, B, k, partition=part)
    part = joint_k_types(M, N, k)
    return extract_diag_k(M, A, k, partition=part, index=0) == extract_diag_k(N, B, k, partition=part, index=1)
