"""Reference computations written independently of the package internals.

Everything here uses plain Python integers and loops so that it shares
no code path with the numpy/numba implementations under test.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter


def index_enumeration(n_cols: int, n_rows: int, n_ch: int, n_tv: int) -> dict[tuple, int]:
    """Position of every (x, y, ch, tv) in nested-loop order y, x, ch, tv."""
    out = {}
    pos = 0
    for y in range(n_rows):
        for x in range(n_cols):
            for ch in range(n_ch):
                for tv in range(n_tv):
                    out[(x, y, ch, tv)] = pos
                    pos += 1
    return out


def xor_rows(rows: list[bytes], selector) -> bytes:
    acc = 0
    for bit, row in zip(selector, rows):
        if int(bit):
            acc ^= int.from_bytes(row, "big")
    return acc.to_bytes(len(rows[0]), "big")


def field_matvec(query, rows: list[list[int]], p: int) -> list[int]:
    width = len(rows[0])
    out = [0] * width
    for q, row in zip(query, rows):
        q = int(q)
        if q:
            for j in range(width):
                out[j] = (out[j] + q * int(row[j])) % p
    return out


def shortest_vectors(p: int, xs: list[int], bound_sq: int) -> tuple[int, list[tuple[int, ...]]]:
    """Exhaustive search of the lattice {(p*n0 + sum x_i v_i, v_2..v_n)}.

    Returns the squared length of the shortest nonzero vector and every
    nonzero vector of squared length <= bound_sq (up to sign of the tail).
    """
    radius = math.isqrt(bound_sq)
    best = None
    inside = []
    for tail in itertools.product(range(-radius, radius + 1), repeat=len(xs)):
        tail_sq = sum(t * t for t in tail)
        if tail_sq > bound_sq and best is not None and tail_sq > best:
            continue
        head = sum(x * t for x, t in zip(xs, tail)) % p
        for h in (head, head - p):
            nsq = h * h + tail_sq
            if nsq == 0:
                continue
            if best is None or nsq < best:
                best = nsq
            if nsq <= bound_sq:
                inside.append((h, *tail))
    return best, inside


def empirical_entropy_bits(symbols) -> float:
    """Zeroth-order entropy of a symbol stream, in bits (total, not per symbol)."""
    counts = Counter(symbols)
    n = sum(counts.values())
    return -sum(c * math.log2(c / n) for c in counts.values()) if n else 0.0


def ring_link_expected(signer_a: int, window_a: int, signer_b: int, window_b: int) -> bool:
    return signer_a == signer_b and window_a == window_b
