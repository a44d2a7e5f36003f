from __future__ import annotations

import itertools

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from lkgeom.core import FiniteStructure, Signature
from lkgeom.corpus import DIGRAPH

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def digraphs(draw, min_n: int = 1, max_n: int = 5, loops: bool = True) -> FiniteStructure:
    n = draw(st.integers(min_n, max_n))
    pairs = [(a, b) for a, b in itertools.product(range(n), repeat=2) if loops or a != b]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return FiniteStructure(DIGRAPH, n, frozenset(("E", p) for p in chosen))


@st.composite
def colored_digraphs(draw, max_n: int = 4) -> FiniteStructure:
    """Digraphs with an extra unary predicate."""
    sig = Signature((("E", 2), ("P", 1)))
    n = draw(st.integers(1, max_n))
    edges = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))))
    marked = draw(st.sets(st.integers(0, n - 1)))
    facts = {("E", e) for e in edges} | {("P", (v,)) for v in marked}
    return FiniteStructure(sig, n, frozenset(facts))


@st.composite
def permuted(draw, M: FiniteStructure) -> FiniteStructure:
    perm = draw(st.permutations(range(M.size)))
    return M.relabel(dict(enumerate(perm)))
