"""Finite relational structures, their text format, and the closure proxy."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np


class StructureError(ValueError):
    """Malformed structure input; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


Fact = tuple[str, tuple[int, ...]]


@dataclass(frozen=True)
class Signature:
    relations: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.relations]
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate relation names in {names}")
        for name, arity in self.relations:
            if arity < 1:
                raise StructureError(f"relation {name} has arity {arity} < 1")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.relations)

    @property
    def max_arity(self) -> int:
        return max((a for _, a in self.relations), default=0)

    def arity(self, name: str) -> int:
        for n, a in self.relations:
            if n == name:
                return a
        raise KeyError(name)

    def extend(self, extra: Iterable[tuple[str, int]]) -> "Signature":
        return Signature(self.relations + tuple(extra))


@dataclass(frozen=True)
class FiniteStructure:
    """A finite structure with universe ``0..size-1``."""

    signature: Signature
    size: int
    facts: frozenset[Fact] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.size < 1:
            raise StructureError("universe must be nonempty")
        object.__setattr__(self, "facts", frozenset(self.facts))
        arities = dict(self.signature.relations)
        for name, tup in self.facts:
            if name not in arities:
                raise StructureError(f"unknown relation {name}")
            if len(tup) != arities[name]:
                raise StructureError(f"{name}{tup}: expected arity {arities[name]}")
            for e in tup:
                if not 0 <= e < self.size:
                    raise StructureError(f"{name}{tup}: element {e} out of range")

    @property
    def universe(self) -> range:
        return range(self.size)

    @cached_property
    def relation_sets(self) -> dict[str, frozenset[tuple[int, ...]]]:
        out: dict[str, set] = {name: set() for name in self.signature.names}
        for name, tup in self.facts:
            out[name].add(tup)
        return {name: frozenset(v) for name, v in out.items()}

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Boolean adjacency tensors, one per relation."""
        out = {}
        for name, arity in self.signature.relations:
            arr = np.zeros((self.size,) * arity, dtype=bool)
            for tup in self.relation_sets[name]:
                arr[tup] = True
            out[name] = arr
        return out

    def holds(self, name: str, tup: tuple[int, ...]) -> bool:
        return tuple(tup) in self.relation_sets[name]

    def expand(self, extra: Mapping[str, Iterable[tuple[int, ...]]], arities: Mapping[str, int]) -> "FiniteStructure":
        """Add new relation symbols with the given interpretations."""
        sig = self.signature.extend((name, arities[name]) for name in extra)
        facts = set(self.facts)
        for name, tuples in extra.items():
            facts.update((name, tuple(t)) for t in tuples)
        return FiniteStructure(sig, self.size, frozenset(facts))

    def relabel(self, perm: Mapping[int, int]) -> "FiniteStructure":
        """Image of this structure under a bijection of the universe."""
        facts = frozenset((name, tuple(perm[e] for e in tup)) for name, tup in self.facts)
        return FiniteStructure(self.signature, self.size, facts)


@dataclass(frozen=True)
class PartialMap:
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        src = [a for a, _ in self.pairs]
        dst = [b for _, b in self.pairs]
        if len(set(src)) != len(src):
            raise ValueError("partial map is not functional")
        if len(set(dst)) != len(dst):
            raise ValueError("partial map is not injective")

    @classmethod
    def from_dict(cls, d: Mapping[int, int]) -> "PartialMap":
        return cls(frozenset(d.items()))

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)

    def inverse(self) -> "PartialMap":
        return PartialMap(frozenset((b, a) for a, b in self.pairs))

    @property
    def domain(self) -> frozenset[int]:
        return frozenset(a for a, _ in self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class ClosureConfig:
    mode: str = "trivial"
    k: int = 2
    threshold: int = 1

    def __post_init__(self):
        if self.mode not in ("trivial", "k-type-count"):
            raise ValueError(f"unknown closure mode {self.mode!r}")
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


# -- text format -------------------------------------------------------------


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise StructureError(f"expected an integer, got {tok!r}", lineno) from None


def parse_structure(text: str) -> FiniteStructure:
    relations: list[tuple[str, int]] = []
    size: int | None = None
    facts: set[Fact] = set()
    for lineno, toks in _tokens(text):
        head = toks[0]
        if head == "rel":
            if size is not None:
                raise StructureError("rel declarations must precede universe", lineno)
            if len(toks) != 3:
                raise StructureError("expected: rel <name> <arity>", lineno)
            arity = _int(toks[2], lineno)
            if arity < 1:
                raise StructureError(f"arity must be positive, got {arity}", lineno)
            if toks[1] in {n for n, _ in relations}:
                raise StructureError(f"duplicate relation {toks[1]}", lineno)
            relations.append((toks[1], arity))
        elif head == "universe":
            if size is not None:
                raise StructureError("duplicate universe line", lineno)
            if len(toks) != 2:
                raise StructureError("expected: universe <n>", lineno)
            size = _int(toks[1], lineno)
            if size < 1:
                raise StructureError("universe must be nonempty", lineno)
        else:
            if size is None:
                raise StructureError("fact before universe line", lineno)
            arities = dict(relations)
            if head not in arities:
                raise StructureError(f"unknown relation {head}", lineno)
            elems = tuple(_int(t, lineno) for t in toks[1:])
            if len(elems) != arities[head]:
                raise StructureError(
                    f"arity mismatch for {head}: expected {arities[head]}, got {len(elems)}", lineno
                )
            for e in elems:
                if not 0 <= e < size:
                    raise StructureError(f"element {e} out of range 0..{size - 1}", lineno)
            facts.add((head, elems))
    if size is None:
        raise StructureError("missing universe line")
    return FiniteStructure(Signature(tuple(relations)), size, frozenset(facts))


def dump_structure(M: FiniteStructure) -> str:
    lines = [f"rel {name} {arity}" for name, arity in M.signature.relations]
    lines.append(f"universe {M.size}")
    for name in M.signature.names:
        for tup in sorted(M.relation_sets[name]):
            lines.append(" ".join([name, *map(str, tup)]))
    return "\n".join(lines) + "\n"


# -- operations --------------------------------------------------------------


def induced_substructure(M: FiniteStructure, A: Iterable[int]) -> tuple[FiniteStructure, dict[int, int]]:
    """Restrict ``M`` to ``A`` and relabel order-preservingly.

    Returns the substructure and the mapping old element -> new element.
    """
    elems = sorted(set(A))
    if not elems:
        raise StructureError("cannot induce on an empty set")
    for e in elems:
        if not 0 <= e < M.size:
            raise StructureError(f"element {e} out of range")
    relabel = {e: i for i, e in enumerate(elems)}
    facts = frozenset(
        (name, tuple(relabel[e] for e in tup))
        for name, tup in M.facts
        if all(e in relabel for e in tup)
    )
    return FiniteStructure(M.signature, len(elems), facts), relabel


def is_partial_iso(M: FiniteStructure, N: FiniteStructure, f: PartialMap | Mapping[int, int]) -> bool:
    if M.signature != N.signature:
        raise StructureError("signature mismatch")
    if not isinstance(f, PartialMap):
        f = PartialMap.from_dict(f)
    m = f.as_dict()
    for a, b in m.items():
        if not (0 <= a < M.size and 0 <= b < N.size):
            raise StructureError(f"pair ({a},{b}) outside the universes")
    dom = sorted(m)
    for name, arity in M.signature.relations:
        for tup in itertools.product(dom, repeat=arity):
            if M.holds(name, tup) != N.holds(name, tuple(m[e] for e in tup)):
                return False
    return True


def k_closure(M: FiniteStructure, B: Iterable[int], cfg: ClosureConfig) -> frozenset[int]:
    """Iterated algebraic-closure proxy inside ``M``.

    In ``k-type-count`` mode an element ``a`` joins the set when at most
    ``cfg.threshold`` elements share its k-type over every (<= k-1)-tuple of
    the current set.
    """
    current = frozenset(B)
    for e in current:
        if not 0 <= e < M.size:
            raise StructureError(f"element {e} out of range")
    if cfg.mode == "trivial":
        return current
    from .pebble import refine_k_types  # noqa: cycle: pebble builds on core

    part = refine_k_types(M, cfg.k)
    color = part.colorings[0]
    k = cfg.k
    while True:
        params = sorted(current)
        contexts = [
            ctx for length in range(k) for ctx in itertools.product(params, repeat=length)
        ]
        groups: dict[tuple, list[int]] = {}
        for a in M.universe:
            sig = tuple(color[_pad((a, *ctx), k)] for ctx in contexts)
            groups.setdefault(sig, []).append(a)
        added = {a for members in groups.values() if len(members) <= cfg.threshold for a in members}
        nxt = current | added
        if nxt == current:
            return current
        current = frozenset(nxt)


def _pad(tup: tuple[int, ...], k: int) -> tuple[int, ...]:
    return tup + (tup[-1],) * (k - len(tup))


def pad_k(tup: Iterable[int], k: int) -> tuple[int, ...]:
    """Pad a nonempty tuple to length ``k`` by repeating its last entry."""
    tup = tuple(tup)
    if not tup or len(tup) > k:
        raise ValueError(f"cannot pad {tup} to length {k}")
    return _pad(tup, k)


def atomic_type(M: FiniteStructure, tup: tuple[int, ...]) -> str:
    """Serialized quantifier-free type of ``tup`` in ``M``.

    Equality pattern first (each position names the first position holding
    the same element), then the true atoms per relation in signature order.
    """
    n = len(tup)
    eq = [tup.index(e) for e in tup]
    parts = ["eq:" + ".".join(map(str, eq))]
    for name, arity in M.signature.relations:
        rs = M.relation_sets[name]
        true = [
            pos for pos in itertools.product(range(n), repeat=arity)
            if tuple(tup[i] for i in pos) in rs
        ]
        parts.append(name + ":" + ",".join(".".join(map(str, p)) for p in true))
    return "|".join(parts)
