"""Programs, their runs inside a finite world, and construction graphs.

A run never leaves the world ``W``: responses are drawn from ``W`` and
closures are computed in ``W``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import ClosureConfig, FiniteStructure, StructureError, atomic_type, induced_substructure, k_closure
from .dag import Dag, d_separated
from .logic import (
    Exists,
    ExpandedFormula,
    Formula,
    FormulaError,
    default_params,
    forcing_triples,
    free_variables,
    ifp_stages,
    parse_formula,
    relation_array,
    satisfying_array,
)
from .pebble import refine_k_types

SUBSET_LIMIT = 12


class ProgramError(ValueError):
    pass


# -- program data ---------------------------------------------------------------


@dataclass(frozen=True)
class SigmaRule:
    psi: ExpandedFormula   # recursion symbol X
    xi: Formula            # reads Y = psi's fixed point; free y*, z0..z{r-1}

    @property
    def y_vars(self) -> tuple[str, ...]:
        return tuple(sorted(v for v in free_variables(self.xi) if v.startswith("y")))


@dataclass(frozen=True)
class ProgramSpec:
    r: int
    theta: tuple[ExpandedFormula, ...]
    phi: tuple[Formula, ...]
    sigma_rules: Mapping[str, SigmaRule]  # bit string or "*" -> rule

    def __post_init__(self):
        if self.r < 1:
            raise ProgramError("r must be positive")
        for th in self.theta:
            if th.arity != self.r:
                raise ProgramError(f"theta formula has arity {th.arity}, expected {self.r}")
            if not th.proper:
                raise ProgramError("theta formulas must be proper existential")
        for ph in self.phi:
            if free_variables(ph):
                raise ProgramError(f"phi is not a sentence: free {sorted(free_variables(ph))}")
        zs = {f"z{i}" for i in range(self.r)}
        for key, rule in self.sigma_rules.items():
            if key != "*" and (len(key) != len(self.phi) or set(key) - {"0", "1"}):
                raise ProgramError(f"sigma key {key!r} is not a {len(self.phi)}-bit vector")
            if rule.psi.arity != self.r or not rule.psi.proper:
                raise ProgramError(f"psi for sigma {key} must be a proper existential {self.r}-ary formula")
            extra = free_variables(rule.xi) - zs - set(rule.y_vars)
            if extra:
                raise ProgramError(f"xi for sigma {key} has stray free variables {sorted(extra)}")

    @property
    def test_names(self) -> tuple[str, ...]:
        return tuple(f"X{i}" for i in range(len(self.theta)))

    def rule(self, sigma: str) -> SigmaRule:
        if sigma in self.sigma_rules:
            return self.sigma_rules[sigma]
        if "*" in self.sigma_rules:
            return self.sigma_rules["*"]
        raise ProgramError(f"no rule for sigma {sigma}")


@dataclass(frozen=True)
class Command:
    chi: Formula                 # free a*, c*, b*
    E: Formula | None = None     # free p0..p{2r-1}, q0..q{2r-1}; None means equality


@dataclass(frozen=True)
class CommandOperator:
    commands: Mapping[tuple[str, str], Command]  # (sigma or "*", qf type or "*")

    def lookup(self, sigma: str, pi: str) -> Command:
        for key in ((sigma, pi), (sigma, "*"), ("*", pi), ("*", "*")):
            if key in self.commands:
                return self.commands[key]
        raise ProgramError(f"no command for sigma {sigma} and type {pi}")


_SECTION = re.compile(r"^\[(\w+)((?:\s+\S+)*)\]$")


def parse_program(text: str) -> tuple[ProgramSpec, CommandOperator]:
    """Read ``r``, ``[theta]``, ``[phi]``, ``[sigma <bits>]`` and ``[command <bits> <type>]`` sections."""
    r = None
    theta_txt: list[str] = []
    phi_txt: list[str] = []
    sigma: dict[str, dict[str, str]] = {}
    command: dict[tuple[str, str], dict[str, str]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            kind, args = m.group(1), m.group(2).split()
            if kind in ("theta", "phi") and not args:
                section = (kind,)
            elif kind == "sigma" and len(args) == 1:
                section = ("sigma", args[0])
                sigma.setdefault(args[0], {})
            elif kind == "command" and len(args) == 2:
                section = ("command", args[0], args[1])
                command.setdefault((args[0], args[1]), {})
            else:
                raise ProgramError(f"line {lineno}: bad section header {line!r}")
            continue
        if section is None:
            toks = line.split()
            if toks[0] == "r" and len(toks) == 2 and toks[1].isdigit():
                r = int(toks[1])
                continue
            raise ProgramError(f"line {lineno}: expected 'r <arity>' or a section header")
        if section[0] == "theta":
            theta_txt.append(line)
        elif section[0] == "phi":
            phi_txt.append(line)
        else:
            key, sep, body = line.partition(":")
            allowed = ("psi", "xi") if section[0] == "sigma" else ("E", "chi")
            if not sep or key.strip() not in allowed:
                raise ProgramError(f"line {lineno}: expected one of {allowed} followed by ':'")
            target = sigma[section[1]] if section[0] == "sigma" else command[section[1], section[2]]
            target[key.strip()] = body.strip()
    if r is None:
        raise ProgramError("missing 'r <arity>' header")
    try:
        theta = tuple(ExpandedFormula.parse(t, r) for t in theta_txt)
        phi = tuple(parse_formula(t) for t in phi_txt)
        rules = {}
        for key, d in sigma.items():
            if set(d) != {"psi", "xi"}:
                raise ProgramError(f"sigma {key} needs both psi: and xi: lines")
            rules[key] = SigmaRule(ExpandedFormula.parse(d["psi"], r), parse_formula(d["xi"]))
        cmds = {}
        for key, d in command.items():
            if "chi" not in d:
                raise ProgramError(f"command {key} needs a chi: line")
            cmds[key] = Command(parse_formula(d["chi"]), parse_formula(d["E"]) if "E" in d else None)
    except FormulaError as exc:
        raise ProgramError(str(exc)) from None
    return ProgramSpec(r, theta, phi, rules), CommandOperator(cmds)


TOY_EDGE_COMPLETION = """\
# edge completion: every vertex gets an out-edge, drawn from the world
r 2
[theta]
(exists y (E x0 y))
(or (E x0 x1) (exists z (and (X x0 z) (E z x1))))
[phi]
(forall x (exists y (X0 x y)))
(exists x (X1 x x))
[sigma *]
psi: (= x0 x1)
xi: (E z0 y0)
[command * *]
chi: (and (E c0 b0) (= b1 b0))
"""


def toy_program() -> tuple[ProgramSpec, CommandOperator]:
    return parse_program(TOY_EDGE_COMPLETION)


# -- evaluation on a finite set ---------------------------------------------------


def expand_test_relations(A: FiniteStructure, spec: ProgramSpec) -> FiniteStructure:
    """``A`` expanded by the fixed points of the theta formulas (each computed independently)."""
    extra = {name: ifp_stages(A, th).fixed_point for name, th in zip(spec.test_names, spec.theta)}
    return A.expand(extra, {name: spec.r for name in spec.test_names})


def sigma_of(A: FiniteStructure, spec: ProgramSpec) -> str:
    test = expand_test_relations(A, spec)
    from .logic import evaluate

    return "".join("1" if evaluate(test, ph) else "0" for ph in spec.phi)


def _attention_array(A: FiniteStructure, spec: ProgramSpec, sigma: str) -> tuple[np.ndarray, np.ndarray]:
    """(psi fixed point, tuples with no xi witness) as boolean arrays over A^r."""
    rule = spec.rule(sigma)
    fp = ifp_stages(A, rule.psi).fixed_point
    fp_arr = relation_array(A.size, spec.r, fp)
    body: Formula = rule.xi
    for y in reversed(rule.y_vars):
        body = Exists(y, body)
    zs = tuple(f"z{i}" for i in range(spec.r))
    witnessed = satisfying_array(A, body, zs, {"Y": fp_arr})
    return fp_arr, ~witnessed


def requests_attention(A: FiniteStructure, spec: ProgramSpec, sigma: str | None = None) -> frozenset[tuple[int, ...]]:
    sigma = sigma_of(A, spec) if sigma is None else sigma
    fp, unwitnessed = _attention_array(A, spec, sigma)
    return frozenset(tuple(int(x) for x in t) for t in np.argwhere(fp & unwitnessed))


# -- runs ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Response:
    c: tuple[int, ...]
    b: tuple[int, ...]
    cls: tuple[int, ...]   # least member of the E-class of (b, c)
    options: int           # how many b the response relation allowed


@dataclass(frozen=True)
class StepRecord:
    index: int
    sigma: str
    attention: tuple[int, ...]
    pi: str
    req: tuple[tuple[int, ...], ...]
    responses: tuple[Response, ...]
    added: tuple[int, ...]


@dataclass(frozen=True)
class RunTrace:
    world: FiniteStructure
    start: frozenset[int]
    sets: tuple[frozenset[int], ...]    # A_0, A_1, ...
    steps: tuple[StepRecord, ...]       # steps[i] acts on sets[i]
    complete: bool
    truncated: bool
    stalled: bool
    final_sigma: str

    @property
    def final(self) -> frozenset[int]:
        return self.sets[-1]

    @property
    def stabilization_step(self) -> int | None:
        return len(self.sets) - 1 if self.complete else None

    def within_bound(self, coeffs: Sequence[int]) -> bool:
        """Whether stabilization happened by ``p(|A_{-1}|)`` with ``p`` given by coefficients (constant first)."""
        if not self.complete:
            return False
        n = len(self.start)
        return self.stabilization_step <= sum(c * n**i for i, c in enumerate(coeffs))

    def format(self) -> str:
        lines = [f"world {self.world.size}", "start " + _fmt_set(self.start)]
        for i, s in enumerate(self.sets):
            lines.append(f"A {i} " + _fmt_set(s))
        for st in self.steps:
            lines.append(f"step {st.index} sigma {st.sigma} attention {_fmt_tup(st.attention)} pi {st.pi}")
            lines.append(f"  req " + " ".join(_fmt_tup(c) for c in st.req))
            for resp in st.responses:
                lines.append(f"  response {_fmt_tup(resp.c)} -> {_fmt_tup(resp.b)} class {_fmt_tup(resp.cls)} "
                             f"options {resp.options}")
            lines.append("  added " + _fmt_set(st.added))
        status = "complete" if self.complete else ("stalled" if self.stalled else "truncated")
        lines.append(f"status {status} sigma {self.final_sigma}")
        if self.complete:
            lines.append(f"stabilized {self.stabilization_step}")
        return "\n".join(lines) + "\n"


def _fmt_tup(t: Iterable[int]) -> str:
    return ",".join(map(str, t)) or "-"


def _fmt_set(s: Iterable[int]) -> str:
    return "{" + ",".join(map(str, sorted(s))) + "}"


def _sub(W: FiniteStructure, elems: Iterable[int]) -> tuple[FiniteStructure, list[int]]:
    A, relabel = induced_substructure(W, elems)
    back = [0] * len(relabel)
    for w, a in relabel.items():
        back[a] = w
    return A, back


def _imaginary_class(W: FiniteStructure, cmd: Command, v: tuple[int, ...], r: int) -> tuple[int, ...]:
    if cmd.E is None:
        return v
    ps = tuple(f"p{i}" for i in range(2 * r))
    env = {f"q{i}": e for i, e in enumerate(v)}
    cls = satisfying_array(W, cmd.E, ps, env=env)
    if not cls[v]:
        raise ProgramError(f"E is not reflexive at {v}")
    rep = tuple(int(x) for x in np.argwhere(cls)[0])
    back = satisfying_array(W, cmd.E, ps, env={f"q{i}": e for i, e in enumerate(rep)})
    if not np.array_equal(back, cls):
        raise ProgramError(f"E is not an equivalence relation around {v}")
    return rep


def eval_star(
    A0: Iterable[int], spec: ProgramSpec, F: CommandOperator, W: FiniteStructure,
    cfg: ClosureConfig = ClosureConfig(), max_steps: int = 64,
) -> RunTrace:
    """Iterate ``eval`` from the closure of ``A0`` until the set is complete."""
    start = frozenset(A0)
    for e in start:
        if not 0 <= e < W.size:
            raise ProgramError(f"element {e} is not in the world")
    if max_steps < 1:
        raise ProgramError("max_steps must be at least 1")
    r = spec.r
    current = k_closure(W, start, cfg)
    sets = [current]
    steps: list[StepRecord] = []
    complete = stalled = False
    sigma = ""
    while True:
        if not current:
            complete = True  # no r-tuples, so nothing can request attention
            break
        A, back = _sub(W, current)
        test = expand_test_relations(A, spec)
        sigma = sigma_of(A, spec)
        requesting = requests_attention(A, spec, sigma)
        if not requesting:
            complete = True
            break
        if len(steps) >= max_steps:
            break
        # least qf type first, then least tuple (in world labels)
        ranked = sorted((atomic_type(test, a), tuple(back[e] for e in a)) for a in requesting)
        pi, attention = ranked[0]
        req = tuple(sorted(t for p, t in ranked if p == pi))
        cmd = F.lookup(sigma, pi)
        bs = tuple(f"b{i}" for i in range(r))
        responses = []
        added: set[int] = set()
        for c in req:
            env = {f"a{i}": e for i, e in enumerate(attention)}
            env.update({f"c{i}": e for i, e in enumerate(c)})
            rel = satisfying_array(W, cmd.chi, bs, env=env)
            hits = np.argwhere(rel)
            if not len(hits):
                raise ProgramError(f"the response formula selects nothing for {c}")
            b = tuple(int(x) for x in hits[0])
            responses.append(Response(c, b, _imaginary_class(W, cmd, b + c, r), len(hits)))
            added |= set(b) | set(c)
        nxt = k_closure(W, current | added, cfg)
        steps.append(StepRecord(len(steps), sigma, attention, pi, req, tuple(responses),
                                tuple(sorted(nxt - current))))
        if nxt == current:
            stalled = True
            break
        current = nxt
        sets.append(current)
    truncated = not complete and not stalled
    return RunTrace(W, start, tuple(sets), tuple(steps), complete, truncated, stalled, sigma)


# -- induction graphs -------------------------------------------------------------


@dataclass(frozen=True)
class InductionGraph:
    """Layers ``0..theta_depth+psi_depth`` of r-tuples (in the structure's own labels)."""

    dag: Dag
    theta_depth: int
    psi_depth: int
    sigma: str
    size: int
    r: int

    @property
    def last(self) -> int:
        return self.theta_depth + self.psi_depth


def _forcing_edges(A: FiniteStructure, phi: ExpandedFormula, offset: int, cfg: ClosureConfig) -> set:
    edges = set()
    seq = ifp_stages(A, phi)
    for t in range(seq.stabilization_index):
        for b, a in forcing_triples(A, seq.stage(t), phi, cfg):
            edges.add(((offset + t, b), (offset + t + 1, a)))
    return edges


def build_induction_graph(A: FiniteStructure, spec: ProgramSpec, cfg: ClosureConfig = ClosureConfig()) -> InductionGraph:
    e_theta = max((ifp_stages(A, th).stabilization_index for th in spec.theta), default=0)
    sigma = sigma_of(A, spec)
    psi = spec.rule(sigma).psi
    e_psi = ifp_stages(A, psi).stabilization_index
    last = e_theta + e_psi
    tuples = list(itertools.product(range(A.size), repeat=spec.r))
    vertices = {(t, a) for t in range(last + 1) for a in tuples}
    edges = {((t, a), (t + 1, a)) for t in range(last) for a in tuples}
    for th in spec.theta:
        edges |= _forcing_edges(A, th, 0, cfg)
    edges |= _forcing_edges(A, psi, e_theta, cfg)
    return InductionGraph(Dag(frozenset(vertices), frozenset(edges)), e_theta, e_psi, sigma, A.size, spec.r)


# -- construction graphs ------------------------------------------------------------


@dataclass(frozen=True)
class ConstructionGraph:
    """Layers ``-1..p-1``; vertex ``(i, a)`` stands for ``(star_i, a)`` with ``a`` in world labels."""

    dag: Dag
    world: FiniteStructure
    r: int
    base: frozenset[int]
    layer_sets: tuple[frozenset[int], ...]   # element set of layer i is layer_sets[i + 1]
    provenance: tuple[tuple[int, int], ...]  # per step: (theta depth, psi depth) of its induction graph

    @property
    def layers(self) -> range:
        return range(-1, len(self.layer_sets) - 1)

    def predecessors(self, v) -> tuple:
        return tuple(sorted(self.dag.parents[v]))

    def label(self, v):
        """Nested label: base tuples name their elements, later ones their predecessors' labels."""
        layer, a = v
        if layer == -1:
            return tuple((0, e) for e in a)
        return tuple((layer + 1, self.label(u)) for u in self.predecessors(v))

    def dump(self) -> str:
        lines = [f"node {vertex_name(v)}" for v in sorted(self.dag.vertices)]
        lines += [f"edge {vertex_name(a)} {vertex_name(b)}" for a, b in sorted(self.dag.edges)]
        for v in sorted(self.dag.vertices):
            if v[0] == -1:
                lines.append(f"label {vertex_name(v)} base")
            else:
                preds = ",".join(vertex_name(u) for u in self.predecessors(v)) or "-"
                lines.append(f"label {vertex_name(v)} {preds}")
        return "\n".join(lines) + "\n"


def vertex_name(v) -> str:
    layer, a = v
    return f"s{layer}:" + ".".join(map(str, a))


def _reach_last(ig: InductionGraph, plus_edges: set) -> dict:
    """For each layer-0 tuple, the plus-layer vertices reachable from it."""
    layer_of = {}
    for t, a in ig.dag.vertices:
        layer_of.setdefault(t, []).append((t, a))
    sources = {v: {v[1]} for v in layer_of.get(0, [])}
    for t in range(ig.last):
        for v in layer_of[t]:
            for w in ig.dag.children[v]:
                sources.setdefault(w, set()).update(sources.get(v, ()))
    reach: dict = {}
    for u, w in plus_edges:
        for s in sources.get(u, ()):
            reach.setdefault(s, set()).add(w)
    return reach


def build_construction_graph(
    trace: RunTrace, spec: ProgramSpec, F: CommandOperator | None = None, cfg: ClosureConfig = ClosureConfig()
) -> ConstructionGraph:
    """Layered graph of the run: a base layer plus one layer per step."""
    W, r = trace.world, spec.r
    closure = lambda s: k_closure(W, s, cfg)  # noqa: E731
    acted = trace.steps[: len(trace.sets) - 1]  # steps that produced the next set
    vertices = {(-1, a) for a in itertools.product(sorted(trace.sets[0]), repeat=r)}
    edges = set()
    provenance = []
    for i, st in enumerate(acted):
        Ai, Anext = trace.sets[i], trace.sets[i + 1]
        A, back = _sub(W, Ai)
        ig = build_induction_graph(A, spec, cfg)
        if ig.sigma != st.sigma:
            raise ProgramError(f"trace step {i} does not match the program (sigma {ig.sigma} vs {st.sigma})")
        provenance.append((ig.theta_depth, ig.psi_depth))
        to_sub = {w: j for j, w in enumerate(back)}
        new_layer = list(itertools.product(sorted(Anext), repeat=r))
        plus = set()
        for resp in st.responses:
            cl = closure(set(resp.b) | set(resp.c))
            src = (ig.last, tuple(to_sub[e] for e in resp.c))
            for b in new_layer:
                if set(b) <= cl:
                    plus.add((src, b))
        reach = _reach_last(ig, plus)
        for b in new_layer:
            vertices.add((i, b))
        for a in itertools.product(sorted(Ai), repeat=r):
            a_sub = tuple(to_sub[e] for e in a)
            targets = reach.get(a_sub, set())
            for b in new_layer:
                if set(a) == set(b) or (b in targets and set(a) <= closure(set(b))):
                    edges.add(((i - 1, a), (i, b)))
    dag = Dag(frozenset(vertices), frozenset(edges))
    return ConstructionGraph(dag, W, r, trace.sets[0], tuple(trace.sets), tuple(provenance))


def hdesc(cg: ConstructionGraph, A0: Iterable[int]) -> frozenset:
    """Base tuples over ``A0`` and every vertex with a predecessor already included."""
    A0 = frozenset(A0)
    out = {v for v in cg.dag.vertices if v[0] == -1 and set(v[1]) <= A0}
    for layer in cg.layers:
        if layer == -1:
            continue
        for v in cg.dag.vertices:
            if v[0] == layer and cg.dag.parents[v] & out:
                out.add(v)
    return frozenset(out)


def _star(cg: ConstructionGraph, S: Iterable[int]) -> frozenset:
    return frozenset((-1, a) for a in itertools.product(sorted(set(S)), repeat=cg.r))


def locally_separated(
    cg: ConstructionGraph, A: Iterable[int], B: Iterable[int], C: Iterable[int],
    cfg: ClosureConfig = ClosureConfig(), limit: int = SUBSET_LIMIT,
) -> bool:
    """d-separation of the base tuples over A and B given hdesc of every intermediate closed set."""
    A, B, C = frozenset(A), frozenset(B), frozenset(C)
    for S in (A, B, C):
        if not S <= cg.base:
            raise ProgramError(f"{sorted(S - cg.base)} are not in the base set")
    W = cg.world
    top = k_closure(W, B | C, cfg)
    free = sorted(top - C)
    if len(free) > limit:
        raise ProgramError(f"{len(free)} elements between C and closure(BC) exceed the limit {limit}")
    X, Y = _star(cg, A), _star(cg, B)
    for mask in range(1 << len(free)):
        Cp = C | {e for j, e in enumerate(free) if mask >> j & 1}
        Z = hdesc(cg, k_closure(W, Cp, cfg) & cg.base)
        if not d_separated(cg.dag, X, Y, Z):
            return False
    return True


# -- deviation probes ---------------------------------------------------------------


@dataclass(frozen=True)
class TupleSpec:
    """A tuple type over parameters: world k-colors of every padded short sequence."""

    length: int
    params: tuple[int, ...]
    signature: tuple[int, ...]


def _spec_signature(W: FiniteStructure, k: int, a: tuple[int, ...], params: tuple[int, ...]) -> tuple[int, ...]:
    part = refine_k_types(W, k)
    symbols = list(a) + list(params)
    out = []
    for length in range(1, k + 1):
        for seq in itertools.product(range(len(symbols)), repeat=length):
            if all(s >= len(a) for s in seq):
                continue
            tup = tuple(symbols[s] for s in seq)
            out.append(part.color(tup + (tup[-1],) * (k - length)))
    return tuple(out)


def tuple_spec(W: FiniteStructure, k: int, example: Sequence[int], params: Iterable[int]) -> TupleSpec:
    example = tuple(example)
    params = tuple(sorted(set(params)))
    for e in example + params:
        if not 0 <= e < W.size:
            raise ProgramError(f"element {e} is not in the world")
    if not example:
        raise ProgramError("the example tuple must be nonempty")
    return TupleSpec(len(example), params, _spec_signature(W, k, example, params))


def realizations(W: FiniteStructure, k: int, spec: TupleSpec, within: Iterable[int]) -> list[tuple[int, ...]]:
    within = sorted(set(within))
    return [a for a in itertools.product(within, repeat=spec.length)
            if _spec_signature(W, k, a, spec.params) == spec.signature]


def deviation_member(
    cg: ConstructionGraph, pi: TupleSpec, B: Iterable[int], C: Iterable[int], D: Iterable[int],
    k: int, cfg: ClosureConfig = ClosureConfig(), limit: int = SUBSET_LIMIT,
) -> bool:
    """Whether the run's base set ``D'`` witnesses deviation of ``pi`` over ``C`` relative to ``D``."""
    B, C, D = frozenset(B), frozenset(C), frozenset(D)
    if frozenset(pi.params) != B | C:
        raise ProgramError("the tuple type is not over BC")
    if not (B | C) <= D <= cg.base:
        raise ProgramError("need BC within D within the run's base set")
    found = realizations(cg.world, k, pi, cg.base)
    if not found:
        return False
    for a in found:
        rng = frozenset(a)
        if locally_separated(cg, rng, D, B | C, cfg, limit) and locally_separated(cg, rng, D, C, cfg, limit):
            return False
    return True


# -- audits ------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    name: str
    checked: int
    failures: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.failures

    def format(self) -> str:
        lines = [f"audit {self.name} checked {self.checked} failures {len(self.failures)}"]
        lines += [f"  {f}" for f in self.failures]
        return "\n".join(lines) + "\n"


def _closed_subsets(W: FiniteStructure, cfg: ClosureConfig, max_size: int):
    for size in range(1, max_size + 1):
        for S in itertools.combinations(range(W.size), size):
            S = frozenset(S)
            if k_closure(W, S, cfg) == S:
                yield S


def audit_genuineness(
    spec: ProgramSpec, W: FiniteStructure, reference: FiniteStructure, k: int,
    cfg: ClosureConfig = ClosureConfig(), max_size: int = 4,
) -> AuditReport:
    """Completeness must coincide with k-equivalence to the reference model on closed subsets."""
    from .invariant import build_invariant

    ref = build_invariant(reference, k).dump()
    checked, failures = 0, []
    for S in _closed_subsets(W, cfg, max_size):
        A, _ = _sub(W, S)
        complete = not requests_attention(A, spec)
        model = build_invariant(A, k).dump() == ref
        checked += 1
        if complete != model:
            failures.append((tuple(sorted(S)), complete, model))
    return AuditReport("genuineness", checked, tuple(failures))


def find_isomorphism(
    M: FiniteStructure, N: FiniteStructure, seed: Mapping[int, int],
    allowed: Callable[[int], Iterable[int]] | None = None,
) -> dict[int, int] | None:
    """Backtracking search for an isomorphism ``M -> N`` extending ``seed``."""
    from .core import is_partial_iso

    if M.size != N.size or not is_partial_iso(M, N, dict(seed)):
        return None
    order = [a for a in M.universe if a not in seed]

    def go(f: dict, i: int):
        if i == len(order):
            return dict(f)
        a = order[i]
        used = set(f.values())
        for b in (allowed(a) if allowed else N.universe):
            if b in used:
                continue
            f[a] = b
            if is_partial_iso(M, N, f):
                res = go(f, i + 1)
                if res is not None:
                    return res
            del f[a]
        return None

    return go(dict(seed), 0)


def audit_condition2(
    spec: ProgramSpec, F: CommandOperator, W: FiniteStructure, k: int,
    cfg: ClosureConfig = ClosureConfig(), max_size: int = 2, max_steps: int = 64, sample: int | None = None,
) -> AuditReport:
    """Runs on k-elementarily related sets end in isomorphic sets, via a map extending the relation."""
    part = refine_k_types(W, k)
    subsets = [S for size in range(1, max_size + 1) for S in itertools.combinations(range(W.size), size)]
    checked, failures = 0, []
    for A in subsets:
        for Bset in subsets:
            if len(Bset) != len(A):
                continue
            for B in itertools.permutations(Bset):
                f = dict(zip(A, B))
                if not _elementary(part, f, k):
                    continue
                if sample is not None and checked >= sample:
                    return AuditReport("condition-2", checked, tuple(failures))
                checked += 1
                ta = eval_star(A, spec, F, W, cfg, max_steps)
                tb = eval_star(B, spec, F, W, cfg, max_steps)
                SA, ba = _sub(W, ta.final)
                SB, bb = _sub(W, tb.final)
                ia = {w: j for j, w in enumerate(ba)}
                ib = {w: j for j, w in enumerate(bb)}
                seed = {ia[a]: ib[b] for a, b in f.items()}
                if find_isomorphism(SA, SB, seed) is None:
                    failures.append((A, B))
    return AuditReport("condition-2", checked, tuple(failures))


def _elementary(part, f: Mapping[int, int], k: int) -> bool:
    dom = sorted(f)
    for length in range(1, k + 1):
        for seq in itertools.product(dom, repeat=length):
            t = seq + (seq[-1],) * (k - length)
            if part.color(t) != part.color(tuple(f[e] for e in t)):
                return False
    return True


def audit_condition3(
    spec: ProgramSpec, F: CommandOperator, W: FiniteStructure,
    cfg: ClosureConfig = ClosureConfig(), max_size: int = 3, max_steps: int = 64,
) -> AuditReport:
    """For A within B, some automorphism of W fixing A sends A's result into B's result."""
    checked, failures = 0, []
    for size in range(1, max_size + 1):
        for B in itertools.combinations(range(W.size), size):
            tb = eval_star(B, spec, F, W, cfg, max_steps).final
            for asize in range(0, size + 1):
                for A in itertools.combinations(B, asize):
                    ta = eval_star(A, spec, F, W, cfg, max_steps).final
                    checked += 1
                    seed = {a: a for a in A}
                    g = find_isomorphism(W, W, seed, allowed=lambda e: tb if e in ta else W.universe)
                    if g is None:
                        failures.append((A, B))
    return AuditReport("condition-3", checked, tuple(failures))
