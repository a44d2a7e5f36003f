"""Workbench for k-variable logic on finite structures."""

from .core import ClosureConfig, FiniteStructure, PartialMap, Signature, parse_structure, dump_structure
from .pebble import k_equivalent, pebble_game_equivalent, refine_k_types
from .invariant import build_invariant, invariants_equal

__all__ = [
    "ClosureConfig", "FiniteStructure", "PartialMap", "Signature", "parse_structure", "dump_structure",
    "k_equivalent", "pebble_game_equivalent", "refine_k_types", "build_invariant", "invariants_equal",
]
