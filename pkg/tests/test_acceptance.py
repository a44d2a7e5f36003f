"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

from __future__ import annotations

import itertools
import random
from collections import defaultdict, deque

import pytest

from lkgeom.core import ClosureConfig, FiniteStructure, dump_structure, is_partial_iso, k_closure, pad_k
from lkgeom.corpus import DIGRAPH, acceptance_corpus, cycle, path, random_structures
from lkgeom.dag import d_separated, d_separated_oracle, random_dag
from lkgeom.invariant import build_invariant, invariants_equal, permutations, permute
from lkgeom.logic import And, Atom, Eq, Exists, ExpandedFormula, Not, Or, ifp_stages
from lkgeom.pebble import joint_k_types, pebble_game_equivalent
from lkgeom.program import build_construction_graph, deviation_member, eval_star, locally_separated, toy_program
from lkgeom.program import tuple_spec
from lkgeom.tableau import (
    Tableau,
    TableauTheory,
    amalgamate,
    check_axioms,
    realize,
    tableau_embeds,
    to_tableau,
)


@pytest.fixture(scope="module")
def corpus():
    return acceptance_corpus(seed=2024)


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")

    return emit


def classes_by_invariant(structures, k):
    groups = defaultdict(list)
    for M in structures:
        groups[build_invariant(M, k).dump()].append(M)
    return groups


# -- 1 ----------------------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3])
def test_criterion_1_invariant_completeness(corpus, report, k):
    """Equal invariants iff the k-pebble game is won, on every pair.

    Game equivalence is an equivalence relation, so it suffices that every
    structure is game-equivalent to its class representative and that no two
    representatives are.
    """
    groups = classes_by_invariant(corpus, k)
    reps = [members[0] for members in groups.values()]
    inside = [(members[0], M) for members in groups.values() for M in members[1:]]
    bad_inside = [(A, B) for A, B in inside if not pebble_game_equivalent(A, B, k)]
    bad_across = [(A, B) for A, B in itertools.combinations(reps, 2) if pebble_game_equivalent(A, B, k)]
    ok = not bad_inside and not bad_across
    report(1, ok, f"k={k}: {len(corpus)} structures, {len(groups)} classes, "
                  f"{len(inside)} same-class and {len(reps) * (len(reps) - 1) // 2} cross-class games")
    assert ok, (bad_inside[:3], bad_across[:3])


# -- 2 ----------------------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3])
def test_criterion_2_round_trips(corpus, report, k):
    bad = []
    for M in corpus:
        th = TableauTheory(build_invariant(M, k))
        T = to_tableau(M, th)
        R = realize(T, th)
        if dump_structure(R) != dump_structure(M) or to_tableau(R, th).dump() != T.dump():
            bad.append(M)
    report(2, not bad, f"k={k}: {len(corpus)} structures, {len(bad)} mismatches")
    assert not bad


# -- 3 ----------------------------------------------------------------------------


def _mutations():
    """(intended axiom, theory, mutated tableau, axioms allowed to fail alongside)."""
    def model(M):
        th = TableauTheory(build_invariant(M, 2))
        return th, to_tableau(M, th)

    def orbit(T, th, tup, alpha, keep=False):
        images = {permute(tup, s): th.act(alpha, s) for s in permutations(T.k)}
        facts = {f for f in T.facts if keep or f[1] not in images}
        return Tableau(T.size, T.k, frozenset(facts | {(b, u) for u, b in images.items()}))

    out = []
    th, T = model(cycle(3))
    other = next(a for a in th.types if a != T.type_of((0, 1)) and th.mu(a) == (0, 1))
    out.append(("G1", th, orbit(T, th, (0, 1), other, keep=True), set()))
    out.append(("G1", th, Tableau(3, 2, T.facts - {(T.type_of((0, 1)), (0, 1))}), {"G3", "G4", "G6"}))
    out.append(("G6", th, T.induced([0, 1])[0], set()))
    th, T = model(cycle(3, directed=False))
    out.append(("G2", th, orbit(T, th, (0, 1), T.type_of((0, 0))), set()))
    star = FiniteStructure(DIGRAPH, 4, frozenset({("E", (0, 1)), ("E", (0, 2)), ("E", (0, 3))}))
    th, T = model(star)
    facts = {f for f in T.facts if f[1] != (1, 2)} | {(T.type_of((0, 1)), (1, 2))}
    out.append(("G3", th, Tableau(4, 2, frozenset(facts)), set()))
    th, T = model(cycle(4))
    out.append(("G5", th, T.induced([0])[0], {"G6"}))
    th, T = model(path(3))
    swapped = {f for f in T.facts if f[1] not in {(0, 1), (1, 0)}}
    swapped |= {(T.type_of((1, 0)), (0, 1)), (T.type_of((0, 1)), (1, 0))}
    # G4 and G5 cannot fail alone once G1, G2 and G6 hold, so G6 accompanies them
    out.append(("G4", th, Tableau(3, 2, frozenset(swapped)), {"G5", "G6"}))
    return out


def test_criterion_3_axiom_soundness(corpus, report):
    bad = []
    for M in corpus:
        for k in (2, 3):
            th = TableauTheory(build_invariant(M, k))
            if not check_axioms(to_tableau(M, th), th).all_ok:
                bad.append((k, M))
    wrong = []
    for axiom, th, mutant, companions in _mutations():
        failed = set(check_axioms(mutant, th).failures())
        if axiom not in failed or not failed - {axiom} <= companions:
            wrong.append((axiom, sorted(failed)))
    ok = not bad and not wrong
    report(3, ok, f"{2 * len(corpus)} model tableaux, {len(bad)} axiom failures; "
                  f"{len(_mutations())} mutations, {len(wrong)} misfired")
    assert ok, (bad[:3], wrong)


# -- 4 ----------------------------------------------------------------------------


def _matching_part(M, N, k):
    """Largest A in M with an ordered B in N whose padded <=k-tuple joint colors agree."""
    part = joint_k_types(M, N, k)
    for size in range(min(M.size, N.size) - 1, 0, -1):
        for A in itertools.combinations(range(M.size), size):
            for B in itertools.permutations(range(N.size), size):
                if all(part.color(pad_k(tuple(A[p] for p in pos), k), 0)
                       == part.color(pad_k(tuple(B[p] for p in pos), k), 1)
                       for n in range(1, k + 1) for pos in itertools.product(range(size), repeat=n)):
                    return A, B
    return None


def test_criterion_4_amalgamation(corpus, report):
    rng = random.Random(5)
    triples, failures = 0, []
    for k in (2, 3):
        groups = [g for g in classes_by_invariant([M for M in corpus if M.size >= 2], k).values()]
        rng.shuffle(groups)
        done = 0
        for g in groups:
            if done >= 30:
                break
            M, N = rng.choice(g), rng.choice(g)
            found = _matching_part(M, N, k)
            if found is None:
                continue
            A, B = found
            th = TableauTheory(build_invariant(M, k))
            T0, T1 = to_tableau(M, th), to_tableau(N, th)
            base, _ = T0.induced(A)
            e0, e1 = dict(enumerate(A)), dict(enumerate(B))
            res = amalgamate(base, T0, T1, th, e0, e1)
            R = realize(res.C, th)
            checks = (
                check_axioms(res.C, th).universal_ok,
                tableau_embeds(T0, res.C, res.g0) and tableau_embeds(T1, res.C, res.g1),
                is_partial_iso(M, R, res.g0) and is_partial_iso(N, R, res.g1),
                all(res.g0[e0[a]] == res.g1[e1[a]] for a in range(base.size)),
                all(step.classes_ok for step in res.log),
            )
            if not all(checks):
                failures.append((k, M, N, A, B, checks))
            done += 1
            triples += 1
    ok = triples >= 50 and not failures
    report(4, ok, f"{triples} triples over k=2,3, {len(failures)} failures")
    assert ok, failures[:3]


# -- 5 ----------------------------------------------------------------------------


def _dag_instances(seed, count=500):
    rng = random.Random(seed)
    for _ in range(count):
        G = random_dag(rng, rng.randint(1, 10), rng.choice([0.15, 0.3, 0.45]))
        V = sorted(G.vertices)
        pick = lambda: {v for v in V if rng.random() < 0.3}  # noqa: E731
        yield rng, G, pick(), pick(), pick(), pick


def test_criterion_5_d_separation(report):
    mismatch = sum(d_separated(G, X, Y, Z) != d_separated_oracle(G, X, Y, Z)
                   for _, G, X, Y, Z, _ in _dag_instances(1))
    law_failures = defaultdict(int)
    for rng, G, X, Y, Z, pick in _dag_instances(2):
        sep = d_separated(G, X, Y, Z)
        if sep != d_separated(G, Y, X, Z):
            law_failures["symmetry"] += 1
        Y0 = {y for y in Y if rng.random() < 0.5}
        if sep and not d_separated(G, X, Y0, Z):
            law_failures["monotonicity"] += 1
        if sep and not d_separated(G, X, Y - Y0, Z | Y0):
            law_failures["base-monotonicity"] += 1
        Y2 = pick()
        if sep and d_separated(G, X, Y2, Z | Y) and not d_separated(G, X, Y | Y2, Z):
            law_failures["contraction"] += 1
        if sep != ((X & Y) <= Z and d_separated(G, X - Z, Y - Z, Z)):
            law_failures["law 0"] += 1
    ok = mismatch == 0 and not law_failures
    report(5, ok, f"500 oracle comparisons, {mismatch} mismatches; 500 law instances, "
                  f"failures {dict(law_failures) or 0}")
    assert ok


# -- 6 ----------------------------------------------------------------------------


def _random_body(rng: random.Random, r: int, depth: int = 3):
    """Random positive-existential formula over E and an r-ary X."""
    names = [f"x{i}" for i in range(r)] + ["z", "w"]

    def gen(d, scope):
        roll = rng.random()
        if d == 0 or roll < 0.35:
            kind = rng.random()
            if kind < 0.45:
                return Atom("E", (rng.choice(scope), rng.choice(scope)))
            if kind < 0.8:
                return Atom("X", tuple(rng.choice(scope) for _ in range(r)))
            if kind < 0.9:
                return Not(Eq(rng.choice(scope), rng.choice(scope)))
            return Eq(rng.choice(scope), rng.choice(scope))
        if roll < 0.6:
            return And(tuple(gen(d - 1, scope) for _ in range(2)))
        if roll < 0.8:
            return Or(tuple(gen(d - 1, scope) for _ in range(2)))
        v = rng.choice(names[r:])
        return Exists(v, gen(d - 1, scope + [v]))

    return gen(depth, names[:r])


def _bfs_closure(M):
    out = set()
    for s in M.universe:
        seen, queue = set(), deque([s])
        while queue:
            v = queue.popleft()
            for w in M.universe:
                if M.holds("E", (v, w)) and w not in seen:
                    seen.add(w)
                    queue.append(w)
        out |= {(s, t) for t in seen}
    return frozenset(out)


def test_criterion_6_ifp_engine(report):
    rng = random.Random(6)
    structures = random_structures(200, 6, seed=6)
    bad_chain = 0
    for M in structures:
        r = rng.choice([1, 2])
        seq = ifp_stages(M, ExpandedFormula(_random_body(rng, r), tuple(f"x{i}" for i in range(r))))
        inflationary = all(a <= b for a, b in zip(seq.stages, seq.stages[1:]))
        stable = seq.stages[-1] == seq.stages[-2] and seq.stabilization_index <= M.size**r
        bad_chain += not (inflationary and stable)
    tc = ExpandedFormula.parse("(or (E x0 x1) (exists z (and (X x0 z) (E z x1))))", 2)
    graphs = random_structures(100, 20, seed=7, cap=20, loops=False, density=0.12)
    bad_tc = sum(ifp_stages(M, tc).fixed_point != _bfs_closure(M) for M in graphs)
    ok = bad_chain == 0 and bad_tc == 0
    report(6, ok, f"200 stage chains, {bad_chain} bad; 100 closures (n<=20), {bad_tc} mismatches")
    assert ok


# -- 7 ----------------------------------------------------------------------------


def test_criterion_7_local_separation_laws(report):
    spec, F = toy_program()
    cfg = ClosureConfig()
    rng = random.Random(7)
    sampled = {"monotonicity": 0, "base-monotonicity": 0, "dev-containment": 0}
    failures = []
    for n in (4, 6, 8, 10, 12):
        W = cycle(n)
        for start in ({0}, {0, 1}, {0, 2}, {0, 1, 2}):
            trace = eval_star(start, spec, F, W, cfg)
            cg = build_construction_graph(trace, spec, F, cfg)
            base = sorted(cg.base)
            pick = lambda pool, p: frozenset(x for x in pool if rng.random() < p)  # noqa: E731
            for _ in range(25):
                A, B, C = pick(base, 0.4), pick(base, 0.4), pick(base, 0.4)
                if len(k_closure(W, B | C, cfg) - C) > 8:
                    continue
                B0 = pick(sorted(B), 0.5)
                if locally_separated(cg, A, B, C, cfg):
                    sampled["monotonicity"] += 1
                    sampled["base-monotonicity"] += 1
                    if not locally_separated(cg, A, B0, C, cfg):
                        failures.append(("monotonicity", n, start, A, B, B0, C))
                    if not locally_separated(cg, A, B, C | B0, cfg):
                        failures.append(("base-monotonicity", n, start, A, B, B0, C))
            for _ in range(15):
                D1 = pick(base, 0.7) or frozenset(base[:1])
                D = pick(sorted(D1), 0.6) or frozenset(sorted(D1)[:1])
                B, C = pick(sorted(D), 0.4), pick(sorted(D), 0.4)
                example = tuple(rng.choice(base) for _ in range(rng.randint(1, 2)))
                pi = tuple_spec(W, 2, example, B | C)
                sampled["dev-containment"] += 1
                if deviation_member(cg, pi, B, C, D, 2, cfg) and not deviation_member(cg, pi, B, C, D1, 2, cfg):
                    failures.append(("dev-containment", n, start, B, C, D, D1, example))
    ok = not failures and all(sampled.values())
    report(7, ok, f"sampled {sampled}, {len(failures)} counterexamples")
    assert ok, failures[:3]


# -- 8 ----------------------------------------------------------------------------


def test_criterion_8_tableau_preservation(corpus, report):
    rng = random.Random(8)
    k = 2
    groups = [g for g in classes_by_invariant([M for M in corpus if M.size >= 2], k).values()]
    agree = disagree = positives = 0
    for i in range(200):
        if i % 2:
            M = rng.choice(rng.choice(groups))
            perm = list(range(M.size))
            rng.shuffle(perm)
            N = M.relabel(dict(enumerate(perm)))
            dom = rng.sample(range(M.size), rng.randint(1, M.size))
            f = {a: perm[a] for a in dom}
        else:
            g = rng.choice(groups)
            M, N = rng.choice(g), rng.choice(g)
            dom = rng.sample(range(M.size), rng.randint(1, min(M.size, N.size)))
            f = dict(zip(dom, rng.sample(range(N.size), len(dom))))
        th = TableauTheory(build_invariant(M, k))
        TM, TN = to_tableau(M, th), to_tableau(N, th)
        tableau_iso = all(TM.typing.get(t) == TN.typing.get(tuple(f[e] for e in t))
                          for t in itertools.product(sorted(f), repeat=k))
        part = joint_k_types(M, N, k)
        colors = all(part.color(pad_k(t, k), 0) == part.color(pad_k(tuple(f[e] for e in t), k), 1)
                     for n in range(1, k + 1) for t in itertools.product(sorted(f), repeat=n))
        positives += colors
        if tableau_iso == colors:
            agree += 1
        else:
            disagree += 1
    ok = disagree == 0
    report(8, ok, f"200 partial maps ({positives} color-preserving), {disagree} disagreements")
    assert ok
