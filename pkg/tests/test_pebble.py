from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lkgeom.core import FiniteStructure, StructureError, atomic_type, pad_k
from lkgeom.corpus import DIGRAPH, all_digraphs, cycle, path
from lkgeom.logic import And, Atom, Eq, Exists, Forall, Not, Or, evaluate, free_variables
from lkgeom.pebble import (
    RefinementError,
    diagrams_agree,
    extract_diag_k,
    joint_k_types,
    k_equivalent,
    pebble_game_equivalent,
    refine_k_types,
)

from conftest import colored_digraphs, digraphs, permuted


def union(*parts: FiniteStructure) -> FiniteStructure:
    facts, offset = set(), 0
    for M in parts:
        facts |= {(name, tuple(e + offset for e in tup)) for name, tup in M.facts}
        offset += M.size
    return FiniteStructure(DIGRAPH, offset, frozenset(facts))


def sentences(variables: tuple[str, ...]):
    """Random sentences over a fixed variable pool, closed existentially."""
    v = st.sampled_from(variables)
    leaf = st.one_of(st.builds(lambda a, b: Atom("E", (a, b)), v, v), st.builds(Eq, v, v))

    def extend(children):
        return st.one_of(
            st.builds(Not, children),
            st.builds(lambda xs: And(tuple(xs)), st.lists(children, min_size=1, max_size=3)),
            st.builds(lambda xs: Or(tuple(xs)), st.lists(children, min_size=1, max_size=3)),
            st.builds(Exists, v, children),
            st.builds(Forall, v, children),
        )

    def close(phi):
        for x in sorted(free_variables(phi)):
            phi = Exists(x, phi)
        return phi

    return st.recursive(leaf, extend, max_leaves=8).map(close)


def test_cycle_unions_need_three_variables():
    six, two_threes = cycle(6), union(cycle(3), cycle(3))
    assert k_equivalent(six, two_threes, 2)
    assert pebble_game_equivalent(six, two_threes, 2)
    assert not k_equivalent(six, two_threes, 3)
    assert not pebble_game_equivalent(six, two_threes, 3)


def test_paths_of_different_length_differ_with_two_variables():
    assert not k_equivalent(path(3), path(4), 2)
    assert not pebble_game_equivalent(path(3), path(4), 2)


def test_k_below_arity_is_rejected():
    with pytest.raises(RefinementError):
        refine_k_types(cycle(3), 1)


def test_tuple_space_cap():
    with pytest.raises(RefinementError):
        refine_k_types(cycle(8), 7)


def test_signature_mismatch_is_rejected():
    N = FiniteStructure(DIGRAPH.extend([("P", 1)]), 2, frozenset())
    with pytest.raises(StructureError):
        k_equivalent(cycle(2), N, 2)
    with pytest.raises(StructureError):
        pebble_game_equivalent(cycle(2), N, 2)


def test_initial_colors_separate_atomic_types():
    M = path(4)
    part = refine_k_types(M, 2)
    for a, b in itertools.product(itertools.product(M.universe, repeat=2), repeat=2):
        if part.color(a) == part.color(b):
            assert atomic_type(M, a) == atomic_type(M, b)


@given(digraphs(max_n=4), digraphs(max_n=4), st.sampled_from([2, 3]))
def test_refinement_agrees_with_game(M, N, k):
    assert k_equivalent(M, N, k) == pebble_game_equivalent(M, N, k)


@given(colored_digraphs(max_n=3), colored_digraphs(max_n=3))
def test_refinement_agrees_with_game_on_richer_signature(M, N):
    assert k_equivalent(M, N, 2) == pebble_game_equivalent(M, N, 2)


@given(st.data())
def test_isomorphic_copies_are_equivalent(data):
    M = data.draw(digraphs(max_n=5))
    N = data.draw(permuted(M))
    assert k_equivalent(M, N, 2) and k_equivalent(M, N, 3)
    assert refine_k_types(M, 2).dump().split("tuple")[0] == refine_k_types(N, 2).dump().split("tuple")[0]


@given(digraphs(max_n=4), digraphs(max_n=4), sentences(("x", "y")))
def test_two_equivalent_structures_agree_on_two_variable_sentences(M, N, phi):
    if k_equivalent(M, N, 2):
        assert evaluate(M, phi) == evaluate(N, phi)


@given(digraphs(max_n=4), st.data())
def test_refinement_is_stable(M, data):
    """Equal colors have equal multisets-free successor sets at every position."""
    k = data.draw(st.sampled_from([2, 3]))
    part = refine_k_types(M, k)
    by_color: dict[int, list] = {}
    for t in part.tuples():
        by_color.setdefault(part.color(t), []).append(t)
    for members in by_color.values():
        first = members[0]
        for t in members[1:]:
            for i in range(k):
                reach = lambda u: {part.color(u[:i] + (e,) + u[i + 1:]) for e in M.universe}  # noqa: E731
                assert reach(first) == reach(t)


def test_all_three_element_digraphs_classified_consistently():
    graphs = all_digraphs(3)
    assert len(all_digraphs(2)) == 4 and len(graphs) == 64
    for M, N in itertools.combinations(graphs, 2):
        assert k_equivalent(M, N, 2) == pebble_game_equivalent(M, N, 2)


def test_joint_partition_shares_colors():
    part = joint_k_types(cycle(6), union(cycle(3), cycle(3)), 2)
    assert part.realized(0) == part.realized(1)


@given(st.data())
def test_diagrams_transport_along_isomorphisms(data):
    M = data.draw(digraphs(min_n=2, max_n=4))
    perm = data.draw(st.permutations(range(M.size)))
    N = M.relabel(dict(enumerate(perm)))
    A = data.draw(st.sets(st.integers(0, M.size - 1), min_size=1))
    # the relabeling must preserve the order of A for position-indexed diagrams
    image = [perm[a] for a in sorted(A)]
    if image == sorted(image):
        assert diagrams_agree(M, A, N, image, 2)


def test_diagram_records_padded_tuples():
    M = path(3)
    d = extract_diag_k(M, [0, 2], 2).as_dict()
    part = refine_k_types(M, 2)
    assert d[(1,)] == part.color(pad_k((2,), 2))
    assert d[(0, 1)] == part.color((0, 2))


def test_diagram_rejects_empty_base():
    with pytest.raises(StructureError):
        extract_diag_k(path(3), [], 2)
