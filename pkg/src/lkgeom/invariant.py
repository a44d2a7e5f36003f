"""The complete invariant for k-variable logic as a canonical class structure."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import FiniteStructure, Signature, StructureError
from .pebble import refine_k_types, qf_type_of_class


class InvariantError(ValueError):
    pass


Perm = tuple[int, ...]


def permutations(k: int) -> list[Perm]:
    return list(itertools.permutations(range(k)))


def permute(tup: tuple, sigma: Perm) -> tuple:
    """``(t[sigma[0]], ..., t[sigma[k-1]])``."""
    return tuple(tup[s] for s in sigma)


def compose(sigma: Perm, tau: Perm) -> Perm:
    """The permutation ``rho`` with ``permute(permute(t, sigma), tau) == permute(t, rho)``."""
    return tuple(sigma[t] for t in tau)


@dataclass(frozen=True)
class InvariantStructure:
    """Classes are numbered ``1..count`` in canonical order."""

    k: int
    signature: Signature
    count: int
    qf: tuple[str, ...]                       # qf[i-1] is the qf type of class i
    perm: tuple[tuple[Perm, tuple[int, ...]], ...]  # sigma -> image of classes 1..count
    acc: frozenset[tuple[int, int]]

    def perm_map(self, sigma: Perm) -> dict[int, int]:
        for s, images in self.perm:
            if s == tuple(sigma):
                return {i + 1: j for i, j in enumerate(images)}
        raise KeyError(sigma)

    def acc_targets(self, cls: int) -> frozenset[int]:
        return frozenset(j for i, j in self.acc if i == cls)

    def dump(self) -> str:
        lines = [f"{self.k} {self.count}"]
        lines += [f"rel {name} {arity}" for name, arity in self.signature.relations]
        lines += [f"class {i} qf {q}" for i, q in enumerate(self.qf, start=1)]
        for sigma, images in sorted(self.perm):
            tag = ",".join(str(s + 1) for s in sigma)
            lines += [f"perm {tag} {i} {j}" for i, j in enumerate(images, start=1)]
        lines += [f"acc {i} {j}" for i, j in sorted(self.acc)]
        return "\n".join(lines) + "\n"

    def check_laws(self) -> None:
        """Group laws of the permutation action and acc well-formedness."""
        ident = tuple(range(self.k))
        if self.perm_map(ident) != {i: i for i in range(1, self.count + 1)}:
            raise InvariantError("identity permutation does not act trivially")
        perms = permutations(self.k)
        maps = {s: self.perm_map(s) for s in perms}
        for s, t in itertools.product(perms, repeat=2):
            st = maps[compose(s, t)]
            for c in range(1, self.count + 1):
                if maps[t][maps[s][c]] != st[c]:
                    raise InvariantError(f"perm action fails composition law at {s},{t},{c}")
        for i, j in self.acc:
            if not (1 <= i <= self.count and 1 <= j <= self.count):
                raise InvariantError(f"acc pair ({i},{j}) out of range")
        for c in range(1, self.count + 1):
            if not self.acc_targets(c):
                raise InvariantError(f"class {c} has no accessible class")


def build_invariant(M: FiniteStructure, k: int, *, allow_large: bool = False) -> InvariantStructure:
    part = refine_k_types(M, k, allow_large=allow_large)
    C = part.colorings[0]
    n = M.size
    count = part.class_count
    qf = tuple(qf_type_of_class(part, c) for c in range(count))
    idx = np.indices(C.shape)
    flat = C.reshape(-1)
    perm = []
    for sigma in permutations(k):
        image = C[tuple(idx[s] for s in sigma)].reshape(-1)
        table = np.full(count, -1)
        table[flat] = image
        if not np.array_equal(table[flat], image):
            raise InvariantError(f"permutation {sigma} is not well defined on classes")
        perm.append((sigma, tuple(int(j) + 1 for j in table)))
    # substitution at the first coordinate
    rest = C.reshape(n, -1)
    acc = set()
    targets_by_class: dict[int, frozenset] = {}
    for col in range(rest.shape[1]):
        column = rest[:, col]
        targets = frozenset(int(x) for x in np.unique(column))
        for src in set(column.tolist()):
            prev = targets_by_class.setdefault(src, targets)
            if prev != targets:
                raise InvariantError("accessibility is not uniform on a class")
            acc.update((src + 1, t + 1) for t in targets)
    inv = InvariantStructure(k, M.signature, count, qf, tuple(perm), frozenset(acc))
    inv.check_laws()
    return inv


def invariants_equal(I1: InvariantStructure, I2: InvariantStructure) -> bool:
    if I1.k != I2.k:
        raise InvariantError(f"k mismatch: {I1.k} vs {I2.k}")
    if I1.signature != I2.signature:
        raise InvariantError("signature mismatch")
    return I1.dump() == I2.dump()


def parse_invariant(text: str) -> InvariantStructure:
    lines = [(i, ln.split("#", 1)[0].split()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, t) for i, t in lines if t]
    if not lines or len(lines[0][1]) != 2:
        raise StructureError("expected header '<k> <N>'", lines[0][0] if lines else None)
    try:
        k, count = map(int, lines[0][1])
    except ValueError:
        raise StructureError("expected header '<k> <N>'", lines[0][0]) from None
    rels, qf = [], {}
    perm: dict[Perm, dict[int, int]] = {}
    acc = set()
    for lineno, toks in lines[1:]:
        try:
            if toks[0] == "rel":
                rels.append((toks[1], int(toks[2])))
            elif toks[0] == "class":
                qf[int(toks[1])] = toks[3]
            elif toks[0] == "perm":
                sigma = tuple(int(s) - 1 for s in toks[1].split(","))
                perm.setdefault(sigma, {})[int(toks[2])] = int(toks[3])
            elif toks[0] == "acc":
                acc.add((int(toks[1]), int(toks[2])))
            else:
                raise StructureError(f"unknown line kind {toks[0]!r}", lineno)
        except (IndexError, ValueError):
            raise StructureError("malformed invariant line", lineno) from None
    if sorted(qf) != list(range(1, count + 1)):
        raise StructureError("class lines do not cover 1..N")
    perm_t = tuple(
        (sigma, tuple(images[i] for i in range(1, count + 1))) for sigma, images in sorted(perm.items())
    )
    inv = InvariantStructure(k, Signature(tuple(rels)), count, tuple(qf[i] for i in range(1, count + 1)),
                             perm_t, frozenset(acc))
    inv.check_laws()
    return inv
