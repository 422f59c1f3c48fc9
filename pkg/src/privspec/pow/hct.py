"""Hashcash tree client puzzles.

Nodes are numbered heap-style: the root is 1, node ``i`` has children
``2i`` and ``2i+1``, and the ``n_l`` leaves occupy ``[n_l, 2 n_l)``.
A leaf solves ``H(n_s || i || 0^32 || 0^32 || n_x)`` and an internal
node solves ``H(n_s || i || h_2i || h_2i+1 || n_x)`` where ``h_j`` is
the full digest of the solved child. Every node digest must start with
``kappa`` zero bits.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Callable

from ..errors import FormatError, ParameterError
from ..util import random_below, random_bytes

DIGEST_BYTES = 32
NONCE_BYTES = 8
_ZERO = bytes(DIGEST_BYTES)

HashFn = Callable[[bytes], bytes]


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


HASHES: dict[int, HashFn] = {0: sha256}


@dataclass(frozen=True)
class HctPuzzle:
    nonce_seed: bytes
    difficulty: int
    n_leaves: int
    hash_id: int = 0

    def __post_init__(self) -> None:
        if self.difficulty < 0 or self.difficulty > 8 * DIGEST_BYTES:
            raise ParameterError(f"difficulty {self.difficulty} out of range")
        n = self.n_leaves
        if n < 2 or n & (n - 1):
            raise ParameterError(f"n_leaves must be a power of two >= 2, got {n}")

    @property
    def depth(self) -> int:
        return self.n_leaves.bit_length() - 1

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_leaves - 1

    def to_bytes(self) -> bytes:
        """``n_s || kappa (u32 LE) || log2(n_l) (u8)``: 37 bytes at lambda=256."""
        return self.nonce_seed + struct.pack("<IB", self.difficulty, self.depth)

    @classmethod
    def from_bytes(cls, data: bytes) -> "HctPuzzle":
        if len(data) < 6:
            raise FormatError("HCT puzzle truncated")
        kappa, level = struct.unpack("<IB", data[-5:])
        if level < 1 or level > 32:
            raise FormatError(f"bad HCT level {level}")
        return cls(bytes(data[:-5]), kappa, 1 << level)


@dataclass(frozen=True)
class HctPath:
    """Leaf-to-root opening: nonces on the path and the sibling digests."""

    leaf: int                      # 1-based leaf number in [1, n_l]
    nonces: tuple[int, ...]        # leaf first, root last
    siblings: tuple[bytes, ...]    # one per non-root node on the path

    def to_bytes(self) -> bytes:
        out = struct.pack("<HB", self.leaf, len(self.siblings))
        out += b"".join(n.to_bytes(NONCE_BYTES, "big") for n in self.nonces)
        return out + b"".join(self.siblings)

    @classmethod
    def from_bytes(cls, data: bytes) -> "HctPath":
        if len(data) < 3:
            raise FormatError("HCT path truncated")
        leaf, depth = struct.unpack_from("<HB", data)
        need = 3 + (depth + 1) * NONCE_BYTES + depth * DIGEST_BYTES
        if len(data) != need:
            raise FormatError("HCT path length mismatch")
        off = 3
        nonces = []
        for _ in range(depth + 1):
            nonces.append(int.from_bytes(data[off:off + NONCE_BYTES], "big"))
            off += NONCE_BYTES
        sibs = tuple(data[off + k * DIGEST_BYTES: off + (k + 1) * DIGEST_BYTES] for k in range(depth))
        return cls(leaf, tuple(nonces), sibs)


@dataclass
class HctSolution:
    puzzle: HctPuzzle
    nonces: list[int]       # index = node id; slot 0 unused
    digests: list[bytes]
    attempts: list[int]

    @property
    def root_nonce(self) -> int:
        return self.nonces[1]

    @property
    def leaf_attempts(self) -> list[int]:
        n = self.puzzle.n_leaves
        return self.attempts[n:2 * n]

    def path(self, leaf: int) -> HctPath:
        n = self.puzzle.n_leaves
        if not 1 <= leaf <= n:
            raise ParameterError(f"leaf {leaf} outside [1, {n}]")
        node = n + leaf - 1
        nonces, sibs = [], []
        while node >= 1:
            nonces.append(self.nonces[node])
            if node > 1:
                sibs.append(self.digests[node ^ 1])
            node //= 2
        return HctPath(leaf, tuple(nonces), tuple(sibs))


def _node_prefix(puzzle: HctPuzzle, node: int, left: bytes, right: bytes) -> bytes:
    return puzzle.nonce_seed + node.to_bytes(4, "big") + left + right


def leading_zero_ok(digest: bytes, kappa: int) -> bool:
    if kappa == 0:
        return True
    return int.from_bytes(digest, "big") >> (8 * len(digest) - kappa) == 0


def hct_gen(lam: int = 256, kappa: int = 20, n_leaves: int = 4, rng=None) -> HctPuzzle:
    if lam % 8:
        raise ParameterError("lambda must be a multiple of 8")
    return HctPuzzle(random_bytes(lam // 8, rng), kappa, n_leaves)


def _search(prefix: bytes, kappa: int, start: int) -> tuple[int, bytes, int]:
    base = hashlib.sha256(prefix)
    limit = 1 << (64 - kappa) if kappa <= 64 else 0
    n = start
    tries = 0
    while True:
        h = base.copy()
        h.update((n & 0xFFFFFFFFFFFFFFFF).to_bytes(NONCE_BYTES, "big"))
        d = h.digest()
        tries += 1
        if kappa <= 64:
            if int.from_bytes(d[:8], "big") < limit:
                return n & 0xFFFFFFFFFFFFFFFF, d, tries
        elif leading_zero_ok(d, kappa):
            return n & 0xFFFFFFFFFFFFFFFF, d, tries
        n += 1


def hct_solve(puzzle: HctPuzzle, rng=None) -> HctSolution:
    """Solve every node, children before parents.

    Without ``rng`` each node's nonce search counts up from zero, so the
    result is the minimal valid nonce per node; with ``rng`` each search
    starts at a random 64-bit offset. The search is unbounded.
    """
    if puzzle.hash_id != 0:
        raise ParameterError("only SHA-256 node hashing is wired into the solver")
    size = 2 * puzzle.n_leaves
    nonces = [0] * size
    digests = [b""] * size
    attempts = [0] * size
    for node in range(size - 1, 0, -1):
        if node >= puzzle.n_leaves:
            prefix = _node_prefix(puzzle, node, _ZERO, _ZERO)
        else:
            prefix = _node_prefix(puzzle, node, digests[2 * node], digests[2 * node + 1])
        start = 0 if rng is None else random_below(1 << 64, rng)
        nonces[node], digests[node], attempts[node] = _search(prefix, puzzle.difficulty, start)
    return HctSolution(puzzle, nonces, digests, attempts)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    failed_node: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def verify_path(puzzle: HctPuzzle, root_nonce: int, path: HctPath, hash_fn: HashFn | None = None) -> Verdict:
    """Check one leaf-to-root path; performs exactly ``depth + 1`` hashes."""
    hash_fn = hash_fn or HASHES[puzzle.hash_id]
    depth = puzzle.depth
    if len(path.nonces) != depth + 1 or len(path.siblings) != depth:
        return Verdict(False, None, "path length")
    if not 1 <= path.leaf <= puzzle.n_leaves:
        return Verdict(False, None, "leaf index")
    if path.nonces[-1] != root_nonce:
        return Verdict(False, 1, "root nonce differs from commitment")
    node = puzzle.n_leaves + path.leaf - 1
    digest = hash_fn(_node_prefix(puzzle, node, _ZERO, _ZERO) + path.nonces[0].to_bytes(NONCE_BYTES, "big"))
    if not leading_zero_ok(digest, puzzle.difficulty):
        return Verdict(False, node, "leaf difficulty")
    for level in range(depth):
        sib = path.siblings[level]
        if len(sib) != DIGEST_BYTES or not leading_zero_ok(sib, puzzle.difficulty):
            return Verdict(False, node ^ 1, "sibling digest")
        left, right = (digest, sib) if node % 2 == 0 else (sib, digest)
        node //= 2
        nonce = path.nonces[level + 1]
        digest = hash_fn(_node_prefix(puzzle, node, left, right) + nonce.to_bytes(NONCE_BYTES, "big"))
        if not leading_zero_ok(digest, puzzle.difficulty):
            return Verdict(False, node, "node difficulty")
    return Verdict(True)


def hct_verify(
    puzzle: HctPuzzle,
    root_nonce: int,
    challenge_path_provider: Callable[[int], HctPath],
    rng=None,
    hash_fn: HashFn | None = None,
) -> Verdict:
    """Interactive verification: challenge a random leaf, check its path."""
    leaf = 1 + random_below(puzzle.n_leaves, rng)
    path = challenge_path_provider(leaf)
    if path.leaf != leaf:
        return Verdict(False, None, "prover answered a different leaf")
    return verify_path(puzzle, root_nonce, path, hash_fn)


def fiat_shamir_leaf(puzzle: HctPuzzle, root_nonce: int, context: bytes = b"") -> int:
    h = hashlib.sha256(b"hct-fs" + puzzle.to_bytes() + root_nonce.to_bytes(NONCE_BYTES, "big") + context)
    return 1 + int.from_bytes(h.digest(), "big") % puzzle.n_leaves


def hct_prove_noninteractive(solution: HctSolution, context: bytes = b"") -> HctPath:
    leaf = fiat_shamir_leaf(solution.puzzle, solution.root_nonce, context)
    return solution.path(leaf)


def hct_verify_noninteractive(
    puzzle: HctPuzzle, path: HctPath, context: bytes = b"", hash_fn: HashFn | None = None
) -> Verdict:
    root = path.nonces[-1] if path.nonces else -1
    if path.leaf != fiat_shamir_leaf(puzzle, root, context):
        return Verdict(False, None, "challenge leaf does not match Fiat-Shamir derivation")
    return verify_path(puzzle, root, path, hash_fn)


def solution_size_bits(puzzle: HctPuzzle) -> int:
    """Reported token size: one digest per tree level."""
    return puzzle.depth * DIGEST_BYTES * 8
