"""Game tableaux: type-symbol structures for a k-variable theory.

A theory is read off a complete invariant.  Types are the invariant's
classes ``1..N``; a tableau assigns types to k-tuples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .core import FiniteStructure, Signature, StructureError
from .invariant import InvariantStructure, Perm, build_invariant, invariants_equal, permutations, permute


class TableauError(ValueError):
    pass


class NotAModelError(TableauError):
    pass


class AmalgamationError(TableauError):
    def __init__(self, message: str, tuple_=None):
        self.tuple = tuple_
        super().__init__(message)


def _parse_qf(qf: str) -> tuple[tuple[int, ...], tuple[tuple[str, tuple[int, ...]], ...]]:
    parts = qf.split("|")
    eq = tuple(int(x) for x in parts[0][3:].split("."))
    atoms = []
    for part in parts[1:]:
        name, _, body = part.partition(":")
        for item in filter(None, body.split(",")):
            atoms.append((name, tuple(int(x) for x in item.split("."))))
    return eq, tuple(atoms)


def equality_pattern(tup: tuple) -> tuple[int, ...]:
    return tuple(tup.index(e) for e in tup)


def _swap0(k: int, i: int) -> Perm:
    s = list(range(k))
    s[0], s[i] = s[i], s[0]
    return tuple(s)


@dataclass(frozen=True, eq=False)
class TableauTheory:
    invariant: InvariantStructure

    @property
    def k(self) -> int:
        return self.invariant.k

    @property
    def count(self) -> int:
        return self.invariant.count

    @property
    def signature(self) -> Signature:
        return self.invariant.signature

    @property
    def types(self) -> range:
        return range(1, self.count + 1)

    @cached_property
    def _qf(self):
        return {a: _parse_qf(q) for a, q in zip(self.types, self.invariant.qf)}

    def mu(self, alpha: int) -> tuple[int, ...]:
        """Equality pattern of the type: position -> first equal position."""
        return self._qf[alpha][0]

    def atoms(self, alpha: int) -> tuple[tuple[str, tuple[int, ...]], ...]:
        """Home-signature atoms ``R(x_i...)`` implied by the type."""
        return self._qf[alpha][1]

    @cached_property
    def _perm(self) -> dict[Perm, dict[int, int]]:
        return {s: self.invariant.perm_map(s) for s in permutations(self.k)}

    def act(self, alpha: int, sigma: Perm) -> int:
        """Type of ``permute(a, sigma)`` for ``a`` of type ``alpha``."""
        return self._perm[tuple(sigma)][alpha]

    @cached_property
    def _acc(self) -> dict[int, frozenset[int]]:
        return {a: self.invariant.acc_targets(a) for a in self.types}

    def acc(self, alpha: int) -> frozenset[int]:
        return self._acc[alpha]

    @cached_property
    def _acc_at(self) -> dict[tuple[int, int], frozenset[int]]:
        out = {}
        for i in range(self.k):
            s = _swap0(self.k, i)
            for a in self.types:
                out[i, a] = frozenset(self.act(b, s) for b in self.acc(self.act(a, s)))
        return out

    def acc_at(self, alpha: int, i: int) -> frozenset[int]:
        """Types reachable by replacing coordinate ``i`` of an ``alpha``-tuple."""
        return self._acc_at[i, alpha]

    def substitute_equal(self, alpha: int, i: int, j: int) -> int:
        """Type of ``a[i -> a_j]`` for ``a`` of type ``alpha``."""
        if i == j:
            return alpha
        hits = [b for b in self.acc_at(alpha, i) if self.mu(b)[max(i, j)] == self.mu(b)[min(i, j)]
                and _same(self.mu(b), i, j)]
        if len(hits) != 1:
            raise TableauError(f"substitution {i}->{j} on type {alpha} is not determined ({hits})")
        return hits[0]

    def pad(self, alpha: int, t: int) -> int:
        """Type of ``(a_1..a_t, a_t, ..., a_t)``."""
        for p in range(t, self.k):
            alpha = self.substitute_equal(alpha, p, t - 1)
        return alpha

    def suffix_pad(self, alpha: int, t: int) -> int:
        """Type of ``(a_{t+1}..a_k, a_k, ..., a_k)``."""
        rot = tuple(range(t, self.k)) + tuple(range(t))
        return self.pad(self.act(alpha, rot), self.k - t)


def _same(mu: tuple[int, ...], i: int, j: int) -> bool:
    return mu[i] == mu[j]


def theory_from_structure(M: FiniteStructure, k: int) -> TableauTheory:
    return TableauTheory(build_invariant(M, k))


@dataclass(frozen=True)
class Tableau:
    size: int
    k: int
    facts: frozenset[tuple[int, tuple[int, ...]]] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "facts", frozenset(self.facts))
        for alpha, tup in self.facts:
            if len(tup) != self.k or not all(0 <= e < self.size for e in tup):
                raise StructureError(f"type fact {alpha} {tup} does not fit size {self.size}, k {self.k}")

    @cached_property
    def typing(self) -> dict[tuple[int, ...], frozenset[int]]:
        out: dict[tuple[int, ...], set[int]] = {}
        for alpha, tup in self.facts:
            out.setdefault(tup, set()).add(alpha)
        return {t: frozenset(v) for t, v in out.items()}

    def type_of(self, tup: tuple[int, ...]) -> int:
        types = self.typing.get(tuple(tup), frozenset())
        if len(types) != 1:
            raise TableauError(f"tuple {tup} has types {sorted(types)}")
        return next(iter(types))

    def tuples(self):
        return itertools.product(range(self.size), repeat=self.k)

    def induced(self, elems: Iterable[int]) -> tuple["Tableau", dict[int, int]]:
        elems = sorted(set(elems))
        relabel = {e: i for i, e in enumerate(elems)}
        facts = frozenset(
            (a, tuple(relabel[e] for e in tup)) for a, tup in self.facts if all(e in relabel for e in tup)
        )
        return Tableau(len(elems), self.k, facts), relabel

    def relabel(self, mapping: Mapping[int, int], size: int | None = None) -> "Tableau":
        facts = frozenset((a, tuple(mapping[e] for e in tup)) for a, tup in self.facts)
        return Tableau(self.size if size is None else size, self.k, facts)

    def dump(self) -> str:
        lines = [f"k {self.k}", f"universe {self.size}"]
        for alpha, tup in sorted(self.facts, key=lambda f: (f[1], f[0])):
            lines.append("type " + " ".join(map(str, (alpha, *tup))))
        return "\n".join(lines) + "\n"


def parse_tableau(text: str) -> Tableau:
    k = size = None
    facts = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        try:
            if toks[0] == "k":
                k = int(toks[1])
            elif toks[0] == "universe":
                size = int(toks[1])
            elif toks[0] == "type":
                if k is None or size is None:
                    raise StructureError("type line before k/universe header", lineno)
                tup = tuple(int(x) for x in toks[2:])
                if len(tup) != k:
                    raise StructureError(f"expected {k} elements", lineno)
                if not all(0 <= e < size for e in tup):
                    raise StructureError("element out of range", lineno)
                facts.add((int(toks[1]), tup))
            else:
                raise StructureError(f"unknown line kind {toks[0]!r}", lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, StructureError):
                raise
            raise StructureError("malformed tableau line", lineno) from None
    if k is None or size is None:
        raise StructureError("missing k or universe header")
    return Tableau(size, k, frozenset(facts))


# -- the two transformations ----------------------------------------------------


def to_tableau(M: FiniteStructure, th: TableauTheory) -> Tableau:
    """Type every k-tuple of ``M`` by its k-variable type in the theory."""
    if M.signature != th.signature:
        raise NotAModelError("signature mismatch")
    inv = build_invariant(M, th.k)
    if not invariants_equal(inv, th.invariant):
        raise NotAModelError("structure is not a model of the theory (its invariant differs)")
    from .pebble import refine_k_types

    C = refine_k_types(M, th.k).colorings[0]
    facts = frozenset((int(C[t]) + 1, t) for t in itertools.product(range(M.size), repeat=th.k))
    return Tableau(M.size, th.k, facts)


def realize(t: Tableau, th: TableauTheory) -> FiniteStructure:
    """Project type facts back to home-signature facts."""
    g1 = _check_g1(t, th)
    if g1 is not None:
        raise TableauError(f"G1 fails at {g1}")
    facts = set()
    for alpha, tup in t.facts:
        for name, pos in th.atoms(alpha):
            facts.add((name, tuple(tup[p] for p in pos)))
    return FiniteStructure(th.signature, t.size, frozenset(facts))


# -- axioms ---------------------------------------------------------------------


AXIOMS = ("G1", "G2", "G3", "G4", "G5", "G6")


@dataclass(frozen=True)
class AxiomReport:
    results: tuple[tuple[str, bool, object], ...]  # (axiom, passed, witness)

    def passed(self, axiom: str) -> bool:
        return dict((a, ok) for a, ok, _ in self.results)[axiom]

    def witness(self, axiom: str):
        return dict((a, w) for a, _, w in self.results)[axiom]

    @property
    def universal_ok(self) -> bool:
        return all(self.passed(a) for a in AXIOMS[:4])

    @property
    def all_ok(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    def failures(self) -> list[str]:
        return [a for a, ok, _ in self.results if not ok]

    def format(self) -> str:
        lines = []
        for a, ok, w in self.results:
            lines.append(f"{a} {'pass' if ok else 'FAIL'}" + ("" if ok else f" witness {w}"))
        lines.append(f"universal(G1-G4) {'pass' if self.universal_ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _check_g1(t: Tableau, th: TableauTheory):
    typing = t.typing
    for tup in t.tuples():
        types = typing.get(tup, frozenset())
        if len(types) != 1 or not all(a in th.types for a in types):
            return tup
    return None


def check_axioms(t: Tableau, th: TableauTheory) -> AxiomReport:
    if t.k != th.k:
        raise TableauError(f"tableau k={t.k} but theory k={th.k}")
    typing = t.typing
    facts = sorted(t.facts, key=lambda f: (f[1], f[0]))
    known = [(a, tup) for a, tup in facts if a in th.types]
    results = []

    results.append(("G1", *_result(_check_g1(t, th))))

    w = next(((a, tup) for a, tup in known if equality_pattern(tup) != th.mu(a)), None)
    results.append(("G2", *_result(w)))

    w = None
    for a, tup in known:
        for sigma in permutations(t.k):
            if th.act(a, sigma) not in typing.get(permute(tup, sigma), ()):
                w = (a, tup, sigma)
                break
        if w:
            break
    results.append(("G3", *_result(w)))

    w = None
    for a, tup in known:
        targets = th.acc(a)
        for y in range(t.size):
            v = (y, *tup[1:])
            if not typing.get(v, frozenset()) & targets:
                w = (a, tup, y)
                break
        if w:
            break
    results.append(("G4", *_result(w)))

    realized = {a for a, _ in t.facts}
    w = next((a for a in th.types if a not in realized), None)
    results.append(("G5", *_result(w)))

    w = None
    by_tail: dict[tuple, set[int]] = {}
    for a, tup in t.facts:
        by_tail.setdefault(tup[1:], set()).add(a)
    for a, tup in known:
        missing = th.acc(a) - by_tail.get(tup[1:], set())
        if missing:
            w = (a, tup, min(missing))
            break
    results.append(("G6", *_result(w)))
    return AxiomReport(tuple(results))


def _result(witness) -> tuple[bool, object]:
    return witness is None, witness


# -- amalgamation ---------------------------------------------------------------


@dataclass(frozen=True)
class AmalgamStep:
    step: int
    t: int
    tuple: tuple[int, ...]
    eta0: int
    eta1: int
    alpha: int
    typed: int
    merges: tuple[tuple[int, int], ...]
    classes_ok: bool  # E restricted to each factor is the identity
    scope: str = "block"  # "block" or "orbit" (fallback: the tuple's Sym[k] images only)


@dataclass(frozen=True)
class AmalgamResult:
    C: Tableau
    g0: dict[int, int]
    g1: dict[int, int]
    log: tuple[AmalgamStep, ...]
    step_bound: int

    def format(self) -> str:
        lines = [self.C.dump().rstrip("\n")]
        lines += [f"g0 {a} {b}" for a, b in sorted(self.g0.items())]
        lines += [f"g1 {a} {b}" for a, b in sorted(self.g1.items())]
        for s in self.log:
            lines.append(
                f"step {s.step} t {s.t} tuple {','.join(map(str, s.tuple))} eta0 {s.eta0} eta1 {s.eta1} "
                f"alpha {s.alpha} typed {s.typed} merges {len(s.merges)} ok {int(s.classes_ok)} scope {s.scope}"
            )
        lines.append(f"steps {len(self.log)} bound {self.step_bound}")
        return "\n".join(lines) + "\n"


class _UnionFind:
    def __init__(self, elems):
        self.parent = {e: e for e in elems}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def copy(self):
        uf = _UnionFind(())
        uf.parent = dict(self.parent)
        return uf


def _check_sub_tableau(A: Tableau, M: Tableau, emb: Mapping[int, int], name: str):
    if sorted(emb) != list(range(A.size)) or len(set(emb.values())) != A.size:
        raise AmalgamationError(f"embedding into {name} must be injective and total on A")
    for tup in A.tuples():
        image = tuple(emb[e] for e in tup)
        if A.typing.get(tup, frozenset()) != M.typing.get(image, frozenset()):
            raise AmalgamationError(f"A is not an induced sub-tableau of {name} at {tup}", tup)


def amalgamate(
    A: Tableau, M0: Tableau, M1: Tableau, th: TableauTheory,
    emb0: Mapping[int, int] | None = None, emb1: Mapping[int, int] | None = None,
    *, check_models: bool = True, node_limit: int = 200_000,
) -> AmalgamResult:
    """Join ``M0`` and ``M1`` over their common sub-tableau ``A``.

    ``emb0``/``emb1`` send A's elements into M0/M1 (identity by default).
    Mixed k-tuples are typed block by block; a type is admissible when its
    projections match, it agrees with every already-typed neighbouring
    tuple, and the equalities it forces never identify two elements of the
    same factor.
    """
    k = th.k
    emb0 = dict(emb0 if emb0 is not None else {i: i for i in range(A.size)})
    emb1 = dict(emb1 if emb1 is not None else {i: i for i in range(A.size)})
    _check_sub_tableau(A, M0, emb0, "M0")
    _check_sub_tableau(A, M1, emb1, "M1")
    if check_models:
        for name, M in (("M0", M0), ("M1", M1)):
            rep = check_axioms(M, th)
            if not rep.all_ok:
                bad = rep.failures()[0]
                raise AmalgamationError(
                    f"{name} is not a game tableau: {bad} fails at {rep.witness(bad)}", rep.witness(bad)
                )

    # Z = M0 plus the fresh part of M1
    n0 = M0.size
    shared = {emb1[a]: emb0[a] for a in range(A.size)}
    to_z1: dict[int, int] = {}
    nxt = n0
    for b in range(M1.size):
        if b in shared:
            to_z1[b] = shared[b]
        else:
            to_z1[b] = nxt
            nxt += 1
    Z = list(range(nxt))
    in0 = set(range(n0))
    in1 = set(to_z1.values())
    from1 = {z: b for b, z in to_z1.items()}

    Q: dict[tuple[int, ...], int] = {}
    for tup in M0.tuples():
        Q[tup] = M0.type_of(tup)
    for tup in M1.tuples():
        Q[tuple(to_z1[e] for e in tup)] = M1.type_of(tup)

    def typ0(tup):
        return M0.type_of(tup)

    def typ1(tup):
        return M1.type_of(tuple(from1[e] for e in tup))

    X = {tup for tup in itertools.product(Z, repeat=k) if tup not in Q}
    candidates = sorted(
        (t, tup) for tup in X for t in range(1, k)
        if set(tup[:t]) <= in0 and set(tup[t:]) <= in1
    )
    # tuples of each factor grouped by the type of their padding
    pad0: dict[tuple[int, int], list[tuple[int, ...]]] = {}
    for t in range(1, k):
        for d in itertools.product(sorted(in0), repeat=t):
            pad0.setdefault((t, typ0(d + (d[-1],) * (k - t))), []).append(d)
        for e in itertools.product(sorted(in1), repeat=k - t):
            pad0.setdefault((-t, typ1(e + (e[-1],) * t)), []).append(e)

    perms = permutations(k)
    uf = _UnionFind(Z)
    log: list[AmalgamStep] = []
    merge_pairs = {a: [(i, j) for i in range(k) for j in range(i + 1, k) if th.mu(a)[i] == th.mu(a)[j]]
                   for a in th.types}

    def factor_ok(u: _UnionFind) -> bool:
        for part in (in0, in1):
            roots = {}
            for z in part:
                r = u.find(z)
                if r in roots:
                    return False
                roots[r] = z
        return True

    def attempt(alpha: int, block: list[tuple[int, ...]]):
        """New typings and union-find for ``alpha`` on ``block``, or None."""
        new: dict[tuple[int, ...], int] = {}
        for tup in block:
            for sigma in perms:
                img = permute(tup, sigma)
                if img in Q:
                    continue
                a = th.act(alpha, sigma)
                if new.setdefault(img, a) != a:
                    return None
        u = uf.copy()
        for tup, a in new.items():
            for i, j in merge_pairs[a]:
                u.union(tup[i], tup[j])
        if not factor_ok(u):
            return None
        for tup, a in new.items():
            mu = th.mu(a)
            for i in range(k):
                for j in range(i + 1, k):
                    if mu[i] != mu[j] and u.find(tup[i]) == u.find(tup[j]):
                        return None
            for i in range(k):
                allowed = th.acc_at(a, i)
                for y in Z:
                    v = tup[:i] + (y,) + tup[i + 1:]
                    b = Q.get(v, new.get(v))
                    if b is not None and b not in allowed:
                        return None
        return new, u

    def choices(t: int, c: tuple[int, ...]):
        eta0 = typ0(c[:t] + (c[t - 1],) * (k - t))
        eta1 = typ1(c[t:] + (c[-1],) * t)
        block = [d + e for d in pad0[(t, eta0)] for e in pad0[(-t, eta1)] if d + e in X]
        options = [a for a in th.types if th.pad(a, t) == eta0 and th.suffix_pad(a, t) == eta1]
        options.sort(key=lambda a: (len(merge_pairs[a]), a))
        out = [("block", a, block) for a in options]
        return eta0, eta1, out + [("orbit", a, [c]) for a in options]

    def next_open(i: int) -> int:
        while i < len(candidates) and candidates[i][1] not in X:
            i += 1
        return i

    # depth-first over type choices; the first success is the greedy result
    # whenever greedy choices never dead-end
    stack: list[tuple] = []
    i = next_open(0)
    frame = (i, *choices(*candidates[i]), 0) if i < len(candidates) else None
    nodes = 0
    first_failure = None
    while frame is not None:
        i, eta0, eta1, opts, pos = frame
        t, c = candidates[i]
        pushed = False
        while pos < len(opts):
            scope, alpha, tuples = opts[pos]
            pos += 1
            nodes += 1
            if nodes > node_limit:
                raise AmalgamationError(f"search budget of {node_limit} attempts exhausted at {c}", c)
            res = attempt(alpha, tuples)
            if res is None:
                continue
            new, u = res
            before = uf
            merges = tuple(sorted({(min(a, b), max(a, b)) for a in Z for b in Z
                                   if a < b and u.find(a) == u.find(b) and before.find(a) != before.find(b)}))
            uf = u
            Q.update(new)
            X.difference_update(new)
            log.append(AmalgamStep(len(log), t, c, eta0, eta1, alpha, len(new), merges, factor_ok(uf), scope))
            stack.append(((i, eta0, eta1, opts, pos), before, tuple(new)))
            pushed = True
            break
        if pushed:
            j = next_open(i + 1)
            frame = (j, *choices(*candidates[j]), 0) if j < len(candidates) else None
            continue
        if first_failure is None:
            first_failure = (c, t, eta0, eta1)
        if not stack:
            c, t, eta0, eta1 = first_failure
            raise AmalgamationError(
                f"no admissible type for mixed tuple {c} (t={t}, eta0={eta0}, eta1={eta1})", c
            )
        frame, uf, typed = stack.pop()
        for tup in typed:
            del Q[tup]
        X.update(typed)
        log.pop()
    if X:
        raise AmalgamationError(f"untyped tuples remain, e.g. {min(X)}", min(X))

    roots = sorted({uf.find(z) for z in Z})
    cls = {r: i for i, r in enumerate(roots)}
    quotient = {z: cls[uf.find(z)] for z in Z}
    facts = frozenset((a, tuple(quotient[e] for e in tup)) for tup, a in Q.items())
    C = Tableau(len(roots), k, facts)
    g0 = {e: quotient[e] for e in range(n0)}
    g1 = {b: quotient[to_z1[b]] for b in range(M1.size)}
    return AmalgamResult(C, g0, g1, tuple(log), th.count**2)


def tableau_embeds(M: Tableau, C: Tableau, g: Mapping[int, int]) -> bool:
    """``g`` is injective and preserves and reflects every type fact."""
    if len(set(g.values())) != len(g) or sorted(g) != list(range(M.size)):
        return False
    for tup in M.tuples():
        image = tuple(g[e] for e in tup)
        if M.typing.get(tup, frozenset()) != C.typing.get(image, frozenset()):
            return False
    return True


# -- bounded cappedness search ------------------------------------------------------


def cap_search(a: Tableau, th: TableauTheory, max_size: int) -> Tableau | None:
    """Look for a model of the full theory extending ``a`` by fresh elements."""
    if max_size < a.size:
        raise TableauError(f"max_size {max_size} is smaller than the tableau ({a.size})")
    if check_axioms(a, th).all_ok:
        return a
    if not check_axioms(a, th).universal_ok:
        return None
    k = th.k
    perms = permutations(k)
    for m in range(a.size + 1, max_size + 1):
        orbits = []
        seen = set()
        for tup in itertools.product(range(m), repeat=k):
            if max(tup) < a.size or tup in seen:
                continue
            orbit = {permute(tup, s) for s in perms}
            seen |= orbit
            orbits.append(tup)
        base = {tup: a.type_of(tup) for tup in a.tuples()}
        found = _cap_backtrack(base, orbits, 0, m, th, perms)
        if found is not None:
            facts = frozenset((alpha, tup) for tup, alpha in found.items())
            cand = Tableau(m, k, facts)
            return cand
    return None


def _cap_backtrack(typing, orbits, idx, m, th, perms):
    if idx == len(orbits):
        cand = Tableau(m, th.k, frozenset((a, t) for t, a in typing.items()))
        return dict(typing) if check_axioms(cand, th).all_ok else None
    rep = orbits[idx]
    pattern = equality_pattern(rep)
    for alpha in th.types:
        if th.mu(alpha) != pattern:
            continue
        assigned = {}
        ok = True
        for s in perms:
            img = permute(rep, s)
            b = th.act(alpha, s)
            if assigned.setdefault(img, b) != b:
                ok = False
                break
        if not ok:
            continue
        if not _neighbours_ok(assigned, typing, m, th):
            continue
        typing.update(assigned)
        res = _cap_backtrack(typing, orbits, idx + 1, m, th, perms)
        if res is not None:
            return res
        for t in assigned:
            del typing[t]
    return None


def _neighbours_ok(assigned, typing, m, th) -> bool:
    for tup, a in assigned.items():
        for i in range(th.k):
            allowed = th.acc_at(a, i)
            for y in range(m):
                v = tup[:i] + (y,) + tup[i + 1:]
                b = assigned.get(v, typing.get(v))
                if b is not None and b not in allowed:
                    return False
    return True
