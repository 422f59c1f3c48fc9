"""Client puzzles: hashcash trees (HCT) and lattice puzzles (LBP)."""

from __future__ import annotations

import enum

from ..errors import FormatError, ParameterError
from .hct import (
    HctPath,
    HctPuzzle,
    HctSolution,
    hct_gen,
    hct_prove_noninteractive,
    hct_solve,
    hct_verify,
    hct_verify_noninteractive,
)
from .lbp import LbpPuzzle, LbpSolution, lbp_alpha, lbp_gen, lbp_solve, lbp_verify


class PowKind(enum.IntEnum):
    NONE = 0
    HCT = 1
    LBP = 2

    @classmethod
    def parse(cls, name) -> "PowKind":
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ParameterError(f"unknown puzzle kind {name!r}") from None


def decode_puzzle(kind: PowKind, data: bytes):
    if kind == PowKind.HCT:
        return HctPuzzle.from_bytes(data)
    if kind == PowKind.LBP:
        return LbpPuzzle.from_bytes(data)
    raise FormatError(f"no puzzle codec for kind {kind}")


def solve_to_bytes(kind: PowKind, puzzle, context: bytes = b"", rng=None) -> bytes:
    """Solve and encode a non-interactive solution."""
    if kind == PowKind.HCT:
        return hct_prove_noninteractive(hct_solve(puzzle, rng=rng), context).to_bytes()
    if kind == PowKind.LBP:
        return lbp_solve(puzzle).to_bytes()
    raise ParameterError(f"cannot solve kind {kind}")


def verify_bytes(kind: PowKind, puzzle, solution: bytes, context: bytes = b"") -> bool:
    try:
        if kind == PowKind.HCT:
            return bool(hct_verify_noninteractive(puzzle, HctPath.from_bytes(solution), context))
        if kind == PowKind.LBP:
            return lbp_verify(puzzle, LbpSolution.from_bytes(solution))
    except FormatError:
        return False
    return False


__all__ = [
    "PowKind", "HctPuzzle", "HctSolution", "HctPath", "hct_gen", "hct_solve", "hct_verify",
    "hct_prove_noninteractive", "hct_verify_noninteractive", "LbpPuzzle", "LbpSolution",
    "lbp_alpha", "lbp_gen", "lbp_solve", "lbp_verify", "decode_puzzle", "solve_to_bytes",
    "verify_bytes",
]
