"""Structure corpora for exhaustive and randomized checks."""

from __future__ import annotations

import itertools
import random

from .core import FiniteStructure, Signature

DIGRAPH = Signature((("E", 2),))
EXHAUSTIVE_CAP = 5
RANDOM_CAP = 8


class CorpusError(ValueError):
    pass


def all_digraphs(n: int, *, cap: int = EXHAUSTIVE_CAP) -> list[FiniteStructure]:
    """Every loop-free digraph on the labeled vertices ``0..n-1``."""
    if n > cap:
        raise CorpusError(f"n={n} exceeds the exhaustive cap {cap}")
    if n < 1:
        raise CorpusError("n must be positive")
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    out = []
    for mask in range(1 << len(pairs)):
        facts = frozenset(("E", p) for i, p in enumerate(pairs) if mask >> i & 1)
        out.append(FiniteStructure(DIGRAPH, n, facts))
    return out


def random_structures(
    count: int, max_n: int, seed: int, *, min_n: int = 1, density: float | None = None,
    loops: bool = True, cap: int = RANDOM_CAP,
) -> list[FiniteStructure]:
    """Seeded random structures with one binary relation."""
    if max_n > cap:
        raise CorpusError(f"n={max_n} exceeds the random cap {cap}")
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.randint(min_n, max_n)
        p = rng.random() if density is None else density
        facts = frozenset(
            ("E", (a, b))
            for a, b in itertools.product(range(n), repeat=2)
            if (loops or a != b) and rng.random() < p
        )
        out.append(FiniteStructure(DIGRAPH, n, facts))
    return out


def cycle(n: int, directed: bool = True) -> FiniteStructure:
    facts = {("E", (i, (i + 1) % n)) for i in range(n)}
    if not directed:
        facts |= {("E", ((i + 1) % n, i)) for i in range(n)}
    return FiniteStructure(DIGRAPH, n, frozenset(facts))


def path(n: int) -> FiniteStructure:
    return FiniteStructure(DIGRAPH, n, frozenset(("E", (i, i + 1)) for i in range(n - 1)))


def acceptance_corpus(seed: int = 2024) -> list[FiniteStructure]:
    """All digraphs on at most four vertices plus 200 random structures (n <= 6)."""
    out = [M for n in range(1, 5) for M in all_digraphs(n)]
    return out + random_structures(200, 6, seed)
