"""Command-line entry point: ``lkgeom <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import ClosureConfig, StructureError, dump_structure, parse_structure
from .corpus import CorpusError, all_digraphs, random_structures
from .dag import DagError, d_separated, d_separated_oracle, parse_dag
from .invariant import InvariantError, build_invariant, parse_invariant
from .logic import ExpandedFormula, FormulaError, ifp_stages
from .pebble import RefinementError, k_equivalent, pebble_game_equivalent, refine_k_types
from .program import (
    ProgramError,
    build_construction_graph,
    deviation_member,
    eval_star,
    locally_separated,
    parse_program,
    toy_program,
    tuple_spec,
)
from .tableau import (
    TableauError,
    TableauTheory,
    amalgamate,
    cap_search,
    check_axioms,
    parse_tableau,
    realize,
    to_tableau,
)

INPUT_ERRORS = (
    StructureError, FormulaError, ProgramError, TableauError, DagError, RefinementError,
    InvariantError, CorpusError, OSError, ValueError,
)


def _read(path: str) -> str:
    return Path(path).read_text()


def _structure(path: str):
    try:
        return parse_structure(_read(path))
    except StructureError as exc:
        raise StructureError(f"{path}: {exc}") from None


def _theory(path: str) -> TableauTheory:
    return TableauTheory(parse_invariant(_read(path)))


def _ints(text: str | None) -> list[int]:
    if not text:
        return []
    return [int(x) for x in text.split(",") if x]


def _names(text: str | None) -> list[str]:
    return [x for x in (text or "").split(",") if x]


def _embedding(text: str | None):
    if not text:
        return None
    out = {}
    for item in text.split(","):
        a, _, b = item.partition(":")
        out[int(a)] = int(b)
    return out


def _cfg(args) -> ClosureConfig:
    return ClosureConfig(args.closure, args.closure_k, args.threshold)


def _program(path: str):
    return toy_program() if path == "toy" else parse_program(_read(path))


# -- subcommands ----------------------------------------------------------------


def cmd_types(args, out):
    M = _structure(args.structure)
    out.write(refine_k_types(M, args.k, allow_large=args.allow_large).dump())
    return 0


def cmd_equiv(args, out):
    M, N = _structure(args.left), _structure(args.right)
    if args.method == "game":
        verdict = pebble_game_equivalent(M, N, args.k)
    else:
        verdict = k_equivalent(M, N, args.k)
        if args.method == "both" and verdict != pebble_game_equivalent(M, N, args.k):
            raise RefinementError("refinement and pebble game disagree")
    out.write("equivalent\n" if verdict else "not equivalent\n")
    return 0 if verdict else 1


def cmd_invariant(args, out):
    out.write(build_invariant(_structure(args.structure), args.k).dump())
    return 0


def cmd_tableau(args, out):
    M = _structure(args.structure)
    th = _theory(args.theory) if args.theory else TableauTheory(build_invariant(M, args.k))
    out.write(to_tableau(M, th).dump())
    return 0


def cmd_realize(args, out):
    out.write(dump_structure(realize(parse_tableau(_read(args.tableau)), _theory(args.theory))))
    return 0


def cmd_check(args, out):
    out.write(check_axioms(parse_tableau(_read(args.tableau)), _theory(args.theory)).format())
    return 0


def cmd_amalgamate(args, out):
    th = _theory(args.theory)
    A, M0, M1 = (parse_tableau(_read(p)) for p in (args.base, args.left, args.right))
    res = amalgamate(A, M0, M1, th, _embedding(args.emb0), _embedding(args.emb1),
                     check_models=not args.no_model_check)
    out.write(res.format())
    return 0


def cmd_cap(args, out):
    found = cap_search(parse_tableau(_read(args.tableau)), _theory(args.theory), args.max_size)
    out.write(found.dump() if found is not None else f"none within size {args.max_size}\n")
    return 0


def cmd_ifp(args, out):
    M = _structure(args.structure)
    seq = ifp_stages(M, ExpandedFormula.parse(args.formula, args.r, proper=not args.improper))
    for t, stage in enumerate(seq.stages):
        out.write(f"stage {t} " + " ".join(",".join(map(str, a)) for a in sorted(stage)) + "\n")
    out.write(f"stabilized {seq.stabilization_index}\n")
    return 0


def cmd_dsep(args, out):
    G = parse_dag(_read(args.dag))
    X, Y, Z = _names(args.x), _names(args.y), _names(args.z)
    verdict = d_separated_oracle(G, X, Y, Z) if args.oracle else d_separated(G, X, Y, Z)
    out.write("d-separated\n" if verdict else "not d-separated\n")
    return 0 if verdict else 1


def _run(args):
    spec, F = _program(args.program)
    W = _structure(args.world)
    return spec, F, W, eval_star(_ints(args.start), spec, F, W, _cfg(args), args.max_steps)


def cmd_run_program(args, out):
    _, _, _, trace = _run(args)
    out.write(trace.format())
    if args.bound:
        coeffs = _ints(args.bound)
        out.write(f"bound {','.join(map(str, coeffs))} {'met' if trace.within_bound(coeffs) else 'missed'}\n")
    return 0


def cmd_cg(args, out):
    spec, F, _, trace = _run(args)
    out.write(build_construction_graph(trace, spec, F, _cfg(args)).dump())
    return 0


def cmd_locsep(args, out):
    spec, F, _, trace = _run(args)
    cg = build_construction_graph(trace, spec, F, _cfg(args))
    verdict = locally_separated(cg, _ints(args.a), _ints(args.b), _ints(args.c), _cfg(args), args.limit)
    out.write("locally separated\n" if verdict else "not locally separated\n")
    return 0 if verdict else 1


def cmd_devmem(args, out):
    spec, F, W, trace = _run(args)
    cg = build_construction_graph(trace, spec, F, _cfg(args))
    B, C = _ints(args.b), _ints(args.c)
    pi = tuple_spec(W, args.k, _ints(args.example), B + C)
    verdict = deviation_member(cg, pi, B, C, _ints(args.d), args.k, _cfg(args), args.limit)
    out.write("member\n" if verdict else "not a member\n")
    return 0 if verdict else 1


def cmd_corpus(args, out):
    if args.kind == "all-digraphs":
        structures = all_digraphs(args.n)
    else:
        structures = random_structures(args.count, args.n, args.seed)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    out.write(f"kind {args.kind} n {args.n} seed {args.seed} count {len(structures)}\n")
    width = len(str(max(len(structures) - 1, 0)))
    for i, M in enumerate(structures):
        path = dest / f"{args.kind}-{args.n}-{i:0{width}d}.str"
        path.write_text(dump_structure(M))
        out.write(f"{path}\n")
    return 0


# -- parser -------------------------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("program", help="program file, or 'toy' for the built-in edge-completion program")
    p.add_argument("world", help="structure file for the ambient world")
    p.add_argument("--start", default="", help="comma-separated starting elements")
    p.add_argument("--max-steps", type=int, default=64)
    p.add_argument("--closure", choices=("trivial", "k-type-count"), default="trivial")
    p.add_argument("--closure-k", type=int, default=2)
    p.add_argument("--threshold", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lkgeom", description="k-variable logic workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("types", help="stable k-tuple coloring")
    p.add_argument("structure")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--allow-large", action="store_true")
    p.set_defaults(func=cmd_types)

    p = sub.add_parser("equiv", help="decide k-variable equivalence")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--method", choices=("refine", "game", "both"), default="refine")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("invariant", help="dump the complete invariant")
    p.add_argument("structure")
    p.add_argument("-k", type=int, required=True)
    p.set_defaults(func=cmd_invariant)

    p = sub.add_parser("tableau", help="type every k-tuple of a structure")
    p.add_argument("structure")
    p.add_argument("--theory", help="invariant dump; defaults to the structure's own theory")
    p.add_argument("-k", type=int, default=2)
    p.set_defaults(func=cmd_tableau)

    p = sub.add_parser("realize", help="structure from a tableau")
    p.add_argument("tableau")
    p.add_argument("--theory", required=True)
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("check", help="check tableau axioms")
    p.add_argument("tableau")
    p.add_argument("--theory", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("amalgamate", help="amalgamate two tableaux over a common part")
    p.add_argument("base")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--theory", required=True)
    p.add_argument("--emb0", help="a:b,... embedding of base into left (default identity)")
    p.add_argument("--emb1", help="a:b,... embedding of base into right (default identity)")
    p.add_argument("--no-model-check", action="store_true")
    p.set_defaults(func=cmd_amalgamate)

    p = sub.add_parser("cap", help="bounded search for a full model extending a tableau")
    p.add_argument("tableau")
    p.add_argument("--theory", required=True)
    p.add_argument("--max-size", type=int, required=True)
    p.set_defaults(func=cmd_cap)

    p = sub.add_parser("ifp", help="stages of an inflationary fixed point")
    p.add_argument("structure")
    p.add_argument("--formula", required=True)
    p.add_argument("-r", type=int, required=True)
    p.add_argument("--improper", action="store_true", help="allow non-existential bodies")
    p.set_defaults(func=cmd_ifp)

    p = sub.add_parser("dsep", help="d-separation query")
    p.add_argument("dag")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--z", default="")
    p.add_argument("--oracle", action="store_true", help="use exhaustive trail enumeration")
    p.set_defaults(func=cmd_dsep)

    p = sub.add_parser("run-program", help="run a program inside a world")
    _add_run_flags(p)
    p.add_argument("--bound", help="polynomial coefficients, constant first")
    p.set_defaults(func=cmd_run_program)

    p = sub.add_parser("cg", help="construction graph of a run")
    _add_run_flags(p)
    p.set_defaults(func=cmd_cg)

    p = sub.add_parser("locsep", help="local separation in the run's construction graph")
    _add_run_flags(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--c", default="")
    p.add_argument("--limit", type=int, default=12)
    p.set_defaults(func=cmd_locsep)

    p = sub.add_parser("devmem", help="deviation membership of the run's base set")
    _add_run_flags(p)
    p.add_argument("--example", required=True, help="tuple realizing the type")
    p.add_argument("--b", default="")
    p.add_argument("--c", default="")
    p.add_argument("--d", required=True)
    p.add_argument("-k", type=int, default=2)
    p.add_argument("--limit", type=int, default=12)
    p.set_defaults(func=cmd_devmem)

    p = sub.add_parser("corpus", help="write a structure corpus to a directory")
    p.add_argument("--kind", choices=("all-digraphs", "random"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus)
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
