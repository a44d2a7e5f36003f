from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lkgeom.dag import (
    HEAD_TO_HEAD,
    HEAD_TO_TAIL,
    TAIL_TO_TAIL,
    Dag,
    DagError,
    active_trails,
    classify,
    d_separated,
    d_separated_oracle,
    descendants,
    is_blocked,
    is_trail,
    parse_dag,
    random_dag,
)

COLLIDER = Dag({"a", "b", "c"}, {("a", "c"), ("b", "c")})
CHAIN = Dag({"a", "b", "c"}, {("a", "b"), ("b", "c")})
FORK = Dag({"a", "b", "c"}, {("b", "a"), ("b", "c")})


@st.composite
def dag_queries(draw, max_n: int = 8):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = random.Random(seed)
    G = random_dag(rng, draw(st.integers(1, max_n)), draw(st.sampled_from([0.2, 0.35, 0.5])))
    subset = st.sets(st.sampled_from(sorted(G.vertices)))
    return G, draw(subset), draw(subset), draw(subset)


def reachability_oracle(G: Dag, X) -> set:
    """Reflexive-transitive closure of the adjacency matrix by repeated squaring."""
    order = sorted(G.vertices)
    idx = {v: i for i, v in enumerate(order)}
    R = np.eye(len(order), dtype=bool)
    for a, b in G.edges:
        R[idx[a], idx[b]] = True
    for _ in range(len(order).bit_length()):
        R = R | (R.astype(int) @ R.astype(int) > 0)
    return {order[j] for x in X for j in np.flatnonzero(R[idx[x]])}


def test_construction_rejects_cycles_loops_and_unknown_vertices():
    with pytest.raises(DagError):
        Dag({1, 2}, {(1, 2), (2, 1)})
    with pytest.raises(DagError):
        Dag({1}, {(1, 1)})
    with pytest.raises(DagError):
        Dag({1}, {(1, 2)})


def test_descendants_examples():
    assert descendants(CHAIN, {"a"}) == {"a", "b", "c"}
    assert descendants(CHAIN, {"c"}) == {"c"}
    with pytest.raises(DagError):
        descendants(CHAIN, {"z"})


@given(dag_queries())
def test_descendants_match_matrix_reachability(q):
    G, X, _, _ = q
    assert descendants(G, X) == reachability_oracle(G, X)


def test_classify_examples():
    assert classify(COLLIDER, ["a", "c", "b"], 1) == HEAD_TO_HEAD
    assert classify(CHAIN, ["a", "b", "c"], 1) == HEAD_TO_TAIL
    assert classify(FORK, ["a", "b", "c"], 1) == TAIL_TO_TAIL
    with pytest.raises(DagError):
        classify(CHAIN, ["a", "b", "c"], 0)


def test_blocking_examples():
    assert is_blocked(COLLIDER, ["a", "c", "b"], set())
    assert not is_blocked(COLLIDER, ["a", "c", "b"], {"c"})
    assert is_blocked(CHAIN, ["a", "b", "c"], {"b"})
    assert not is_blocked(CHAIN, ["a", "b", "c"], set())


def test_collider_opened_by_a_descendant():
    G = Dag({"a", "b", "c", "d"}, {("a", "c"), ("b", "c"), ("c", "d")})
    assert not is_blocked(G, ["a", "c", "b"], {"d"})
    assert not d_separated(G, {"a"}, {"b"}, {"d"})


def test_trails_may_repeat_vertices():
    assert is_trail(CHAIN, ["a", "b", "a", "b", "c"])
    assert not is_trail(CHAIN, ["a", "c"])


def test_d_separation_examples():
    for decide in (d_separated, d_separated_oracle):
        assert decide(COLLIDER, {"a"}, {"b"}, set())
        assert not decide(COLLIDER, {"a"}, {"b"}, {"c"})
        assert decide(CHAIN, {"a"}, {"c"}, {"b"})
        assert not decide(CHAIN, {"a"}, {"c"}, set())
        assert not decide(CHAIN, {"a"}, {"a"}, set())
        assert decide(CHAIN, {"a"}, {"a"}, {"a"})


def test_active_trails_are_unblocked_trails():
    G = Dag({"a", "b", "c", "d"}, {("a", "c"), ("b", "c"), ("c", "d")})
    trails = list(active_trails(G, {"a"}, {"b"}, {"d"}))
    assert ("a", "c", "b") in trails
    for t in trails:
        assert is_trail(G, t) and not is_blocked(G, t, {"d"})


@given(dag_queries())
def test_fast_procedure_matches_trail_oracle(q):
    G, X, Y, Z = q
    assert d_separated(G, X, Y, Z) == d_separated_oracle(G, X, Y, Z)


@given(dag_queries())
def test_law_zero(q):
    G, X, Y, Z = q
    assert d_separated(G, X, Y, Z) == ((X & Y) <= Z and d_separated(G, X - Z, Y - Z, Z))


@given(dag_queries())
def test_symmetry(q):
    G, X, Y, Z = q
    assert d_separated(G, X, Y, Z) == d_separated(G, Y, X, Z)


@given(dag_queries(), st.data())
def test_monotonicity_and_base_monotonicity(q, data):
    G, X, Y, Z = q
    if not d_separated(G, X, Y, Z):
        return
    Y0 = data.draw(st.sets(st.sampled_from(sorted(Y)))) if Y else set()
    assert d_separated(G, X, Y0, Z)
    assert d_separated(G, X, Y - Y0, Z | Y0)


@given(dag_queries(), st.data())
def test_contraction(q, data):
    G, X, Y1, Z = q
    Y2 = data.draw(st.sets(st.sampled_from(sorted(G.vertices))))
    if d_separated(G, X, Y1, Z) and d_separated(G, X, Y2, Z | Y1):
        assert d_separated(G, X, Y1 | Y2, Z)


def test_parse_dump_round_trip():
    text = "node a\nnode b\nnode c\nedge a c\nedge b c\n"
    G = parse_dag(text)
    assert G == COLLIDER
    assert parse_dag(G.dump()) == G


@pytest.mark.parametrize("text", ["node", "edge a b", "node a\nnode b\nedge a b\nedge b a", "vertex a"])
def test_parse_errors(text):
    with pytest.raises(DagError):
        parse_dag(text)
