"""First-order formulas over finite structures and inflationary fixed points.

Formulas are evaluated as boolean tensors indexed by their unassigned free
variables (axes in sorted variable order), so a formula with ``v`` free
variables over an ``n``-element structure costs ``O(n^v)`` memory.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .core import ClosureConfig, FiniteStructure, k_closure


class FormulaError(ValueError):
    pass


class UnboundVariableError(FormulaError):
    pass


# -- syntax ------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    rel: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Eq:
    left: str
    right: str


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class And:
    subs: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    subs: tuple["Formula", ...]


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"


Formula = Union[Atom, Eq, Not, And, Or, Exists, Forall]

TRUE = And(())
FALSE = Or(())

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_']*$")


def parse_formula(text: str) -> Formula:
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise FormulaError("empty formula")
    pos = 0

    def ident(tok: str) -> str:
        if not _IDENT.match(tok):
            raise FormulaError(f"bad identifier {tok!r}")
        return tok

    def parse() -> Formula:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != "(":
            raise FormulaError(f"expected '(' at token {pos}")
        pos += 1
        if pos >= len(tokens):
            raise FormulaError("unexpected end of formula")
        head = tokens[pos]
        pos += 1
        if head in ("not", "and", "or"):
            subs = []
            while pos < len(tokens) and tokens[pos] == "(":
                subs.append(parse())
            out: Formula
            if head == "not":
                if len(subs) != 1:
                    raise FormulaError("not takes exactly one argument")
                out = Not(subs[0])
            elif head == "and":
                out = And(tuple(subs))
            else:
                out = Or(tuple(subs))
        elif head in ("exists", "forall"):
            var = ident(tokens[pos])
            pos += 1
            body = parse()
            out = Exists(var, body) if head == "exists" else Forall(var, body)
        else:
            args = []
            while pos < len(tokens) and tokens[pos] not in "()":
                args.append(ident(tokens[pos]))
                pos += 1
            if head == "=":
                if len(args) != 2:
                    raise FormulaError("= takes exactly two variables")
                out = Eq(args[0], args[1])
            else:
                out = Atom(ident(head), tuple(args))
        if pos >= len(tokens) or tokens[pos] != ")":
            raise FormulaError(f"expected ')' at token {pos}")
        pos += 1
        return out

    phi = parse()
    if pos != len(tokens):
        raise FormulaError("trailing tokens after formula")
    return phi


def format_formula(phi: Formula) -> str:
    if isinstance(phi, Atom):
        return "(" + " ".join((phi.rel, *phi.args)) + ")"
    if isinstance(phi, Eq):
        return f"(= {phi.left} {phi.right})"
    if isinstance(phi, Not):
        return f"(not {format_formula(phi.sub)})"
    if isinstance(phi, (And, Or)):
        head = "and" if isinstance(phi, And) else "or"
        return "(" + " ".join([head, *map(format_formula, phi.subs)]) + ")"
    head = "exists" if isinstance(phi, Exists) else "forall"
    return f"({head} {phi.var} {format_formula(phi.body)})"


def free_variables(phi: Formula) -> frozenset[str]:
    if isinstance(phi, Atom):
        return frozenset(phi.args)
    if isinstance(phi, Eq):
        return frozenset((phi.left, phi.right))
    if isinstance(phi, Not):
        return free_variables(phi.sub)
    if isinstance(phi, (And, Or)):
        return frozenset().union(*map(free_variables, phi.subs))
    return free_variables(phi.body) - {phi.var}


def variables(phi: Formula) -> frozenset[str]:
    if isinstance(phi, Atom):
        return frozenset(phi.args)
    if isinstance(phi, Eq):
        return frozenset((phi.left, phi.right))
    if isinstance(phi, Not):
        return variables(phi.sub)
    if isinstance(phi, (And, Or)):
        return frozenset().union(*map(variables, phi.subs))
    return variables(phi.body) | {phi.var}


def variable_count(phi: Formula) -> int:
    """Distinct variable names, free or bound."""
    return len(variables(phi))


def relations_used(phi: Formula) -> dict[str, int]:
    if isinstance(phi, Atom):
        return {phi.rel: len(phi.args)}
    if isinstance(phi, Eq):
        return {}
    if isinstance(phi, Not):
        return relations_used(phi.sub)
    if isinstance(phi, (And, Or)):
        out: dict[str, int] = {}
        for s in phi.subs:
            for name, arity in relations_used(s).items():
                if out.setdefault(name, arity) != arity:
                    raise FormulaError(f"{name} used with arities {out[name]} and {arity}")
        return out
    return relations_used(phi.body)


def is_existential(phi: Formula, positive: bool = True) -> bool:
    """True when every quantifier is existential once negations are pushed inward."""
    if isinstance(phi, (Atom, Eq)):
        return True
    if isinstance(phi, Not):
        return is_existential(phi.sub, not positive)
    if isinstance(phi, (And, Or)):
        return all(is_existential(s, positive) for s in phi.subs)
    if isinstance(phi, Exists) != positive:
        return False
    return is_existential(phi.body, positive)


# -- semantics ---------------------------------------------------------------

Aux = Mapping[str, Union[np.ndarray, tuple[int, Iterable[tuple[int, ...]]]]]


def relation_array(n: int, arity: int, tuples: Iterable[tuple[int, ...]]) -> np.ndarray:
    arr = np.zeros((n,) * arity, dtype=bool)
    for t in tuples:
        arr[tuple(t)] = True
    return arr


def _relations(M: FiniteStructure, aux: Aux | None) -> dict[str, np.ndarray]:
    rels = dict(M.arrays)
    for name, val in (aux or {}).items():
        if isinstance(val, np.ndarray):
            rels[name] = val
        else:
            arity, tuples = val
            rels[name] = relation_array(M.size, arity, tuples)
    return rels


def _align(vs: tuple[str, ...], arr: np.ndarray, target: tuple[str, ...]) -> np.ndarray:
    present = set(vs)
    return arr.reshape([arr.shape[vs.index(v)] if v in present else 1 for v in target])


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _tensor(phi: Formula, n: int, rels: dict[str, np.ndarray], env: dict[str, int]) -> tuple[tuple[str, ...], np.ndarray]:
    if isinstance(phi, Atom):
        if phi.rel not in rels:
            raise FormulaError(f"unknown relation {phi.rel}")
        arr = rels[phi.rel]
        if arr.ndim != len(phi.args):
            raise FormulaError(f"{phi.rel} has arity {arr.ndim}, applied to {len(phi.args)} variables")
        index = tuple(env[v] if v in env else slice(None) for v in phi.args)
        sub = arr[index]
        free = [v for v in phi.args if v not in env]
        out_vars = tuple(sorted(set(free)))
        if not free:
            return (), np.asarray(sub)
        if tuple(free) == out_vars:
            return out_vars, sub
        letters = {v: _LETTERS[i] for i, v in enumerate(out_vars)}
        spec = "".join(letters[v] for v in free) + "->" + "".join(letters[v] for v in out_vars)
        return out_vars, np.einsum(spec, sub.astype(np.uint8)).astype(bool)
    if isinstance(phi, Eq):
        a, b = phi.left, phi.right
        if a in env and b in env:
            return (), np.asarray(env[a] == env[b])
        if a in env or b in env:
            fixed, free = (env[a], b) if a in env else (env[b], a)
            vec = np.zeros(n, dtype=bool)
            vec[fixed] = True
            return (free,), vec
        if a == b:
            return (a,), np.ones(n, dtype=bool)
        return tuple(sorted((a, b))), np.eye(n, dtype=bool)
    if isinstance(phi, Not):
        vs, arr = _tensor(phi.sub, n, rels, env)
        return vs, ~arr
    if isinstance(phi, (And, Or)):
        parts = [_tensor(s, n, rels, env) for s in phi.subs]
        target = tuple(sorted(set().union(*(vs for vs, _ in parts))))
        if isinstance(phi, And):
            acc = np.ones((n,) * len(target), dtype=bool)
            for vs, arr in parts:
                acc = acc & _align(vs, arr, target)
        else:
            acc = np.zeros((n,) * len(target), dtype=bool)
            for vs, arr in parts:
                acc = acc | _align(vs, arr, target)
        return target, acc
    inner_env = {v: e for v, e in env.items() if v != phi.var}
    vs, arr = _tensor(phi.body, n, rels, inner_env)
    if phi.var not in vs:
        return vs, arr
    axis = vs.index(phi.var)
    reduced = arr.any(axis=axis) if isinstance(phi, Exists) else arr.all(axis=axis)
    return vs[:axis] + vs[axis + 1:], reduced


def evaluate(M: FiniteStructure, phi: Formula, asg: Mapping[str, int] | None = None, aux: Aux | None = None) -> bool:
    asg = dict(asg or {})
    missing = free_variables(phi) - set(asg)
    if missing:
        raise UnboundVariableError(f"unassigned free variables {sorted(missing)}")
    for v, e in asg.items():
        if not 0 <= e < M.size:
            raise FormulaError(f"{v} assigned out-of-range element {e}")
    vs, arr = _tensor(phi, M.size, _relations(M, aux), asg)
    assert vs == ()
    return bool(arr)


def satisfying_array(
    M: FiniteStructure, phi: Formula, params: tuple[str, ...], aux: Aux | None = None,
    env: Mapping[str, int] | None = None,
) -> np.ndarray:
    """Boolean array over ``M^len(params)`` of the tuples satisfying ``phi``."""
    env = dict(env or {})
    extra = free_variables(phi) - set(params) - set(env)
    if extra:
        raise UnboundVariableError(f"free variables {sorted(extra)} are not parameters")
    vs, arr = _tensor(phi, M.size, _relations(M, aux), env)
    n, r = M.size, len(params)
    if not r:
        return np.asarray(arr)
    letters = {v: _LETTERS[i] for i, v in enumerate(dict.fromkeys(params))}
    # broadcast over parameters the formula ignores, then read the params order
    full_vars = tuple(sorted(set(params)))
    full = np.broadcast_to(_align(vs, arr, full_vars), (n,) * len(full_vars))
    spec = "".join(letters[v] for v in full_vars) + "->" + "".join(letters[v] for v in params)
    if len(set(params)) != len(params):
        raise FormulaError(f"repeated parameter names {params}")
    return np.einsum(spec, full.astype(np.uint8)).astype(bool)


def satisfying_tuples(M: FiniteStructure, phi: Formula, params: tuple[str, ...], aux: Aux | None = None) -> frozenset[tuple[int, ...]]:
    arr = satisfying_array(M, phi, params, aux)
    return frozenset(tuple(int(x) for x in t) for t in np.argwhere(arr))


# -- inflationary fixed points -------------------------------------------------


def default_params(r: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(r))


@dataclass(frozen=True)
class ExpandedFormula:
    """A formula ``body(params; aux)`` where ``aux`` names an r-ary relation."""

    body: Formula
    params: tuple[str, ...]
    aux: str = "X"
    proper: bool = True

    def __post_init__(self):
        if len(set(self.params)) != len(self.params):
            raise FormulaError("parameters must be distinct")
        extra = free_variables(self.body) - set(self.params)
        if extra:
            raise FormulaError(f"free variables {sorted(extra)} are not parameters")
        used = relations_used(self.body)
        if self.aux in used and used[self.aux] != self.arity:
            raise FormulaError(f"aux symbol {self.aux} used with arity {used[self.aux]}, expected {self.arity}")
        if self.proper and not is_existential(self.body):
            raise FormulaError("a proper expanded formula must be existential")

    @property
    def arity(self) -> int:
        return len(self.params)

    @classmethod
    def parse(cls, text: str, r: int, aux: str = "X", proper: bool = True) -> "ExpandedFormula":
        return cls(parse_formula(text), default_params(r), aux, proper)

    def step(self, A: FiniteStructure, current: np.ndarray, aux: Aux | None = None) -> np.ndarray:
        """Tuples satisfying the body when ``aux`` is interpreted by ``current``."""
        extra = dict(aux or {})
        extra[self.aux] = current
        return satisfying_array(A, self.body, self.params, extra)


def _as_set(arr: np.ndarray) -> frozenset[tuple[int, ...]]:
    return frozenset(tuple(int(x) for x in t) for t in np.argwhere(arr))


@dataclass(frozen=True)
class StageSequence:
    stages: tuple[frozenset[tuple[int, ...]], ...]
    stabilization_index: int

    @property
    def fixed_point(self) -> frozenset[tuple[int, ...]]:
        return self.stages[-1]

    def stage(self, t: int) -> frozenset[tuple[int, ...]]:
        return self.stages[min(t, len(self.stages) - 1)]


def ifp_stages(A: FiniteStructure, psi: ExpandedFormula, aux: Aux | None = None) -> StageSequence:
    for name, arity in relations_used(psi.body).items():
        if name == psi.aux or (aux and name in aux):
            continue
        if name not in A.signature.names:
            raise FormulaError(f"relation {name} is not in the structure's signature")
        if A.signature.arity(name) != arity:
            raise FormulaError(f"{name} has arity {A.signature.arity(name)}, used with {arity}")
    r = psi.arity
    current = np.zeros((A.size,) * r, dtype=bool)
    stages = [_as_set(current)]
    bound = A.size**r
    while True:
        nxt = current | psi.step(A, current, aux)
        stages.append(_as_set(nxt))
        if np.array_equal(nxt, current):
            break
        current = nxt
        if len(stages) - 2 > bound:
            raise AssertionError("inflationary chain failed to stabilize within n^r steps")
    return StageSequence(tuple(stages), len(stages) - 2)


def forcing_triples(
    A: FiniteStructure,
    R: Iterable[tuple[int, ...]],
    phi: ExpandedFormula,
    cfg: ClosureConfig = ClosureConfig(),
    aux: Aux | None = None,
) -> frozenset[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Pairs ``(b, a)`` such that ``b`` forces ``a`` into the next stage over ``(A, R)``."""
    R = frozenset(tuple(t) for t in R)
    r = phi.arity
    for t in R:
        if len(t) != r or not all(0 <= e < A.size for e in t):
            raise FormulaError(f"{t} is not an {r}-tuple over the universe")
    current = relation_array(A.size, r, R)
    fires = phi.step(A, current, aux)
    new = _as_set(fires & ~current)
    if not new:
        return frozenset()
    out = set()
    for b in sorted(R):
        cl = k_closure(A, b, cfg)
        reduced = frozenset(t for t in R if not set(t) <= cl)
        still = phi.step(A, relation_array(A.size, r, reduced), aux)
        for a in new:
            if not still[a]:
                out.add((b, a))
    return frozenset(out)
