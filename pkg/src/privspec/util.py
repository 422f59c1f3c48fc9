"""Small helpers: randomness plumbing, bit packing, byte XOR."""

from __future__ import annotations

import os

import numpy as np


def as_rng(rng) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(int.from_bytes(os.urandom(16), "little"))
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def random_bytes(n: int, rng=None) -> bytes:
    """``n`` random bytes; OS entropy when no generator is supplied."""
    if rng is None:
        return os.urandom(n)
    return rng.bytes(n)


def random_below(bound: int, rng=None) -> int:
    """Uniform integer in ``[0, bound)`` for arbitrarily large ``bound``."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    nbits = bound.bit_length()
    nbytes = (nbits + 7) // 8
    excess = nbytes * 8 - nbits
    while True:
        x = int.from_bytes(random_bytes(nbytes, rng), "big") >> excess
        if x < bound:
            return x


def pack_bits(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def unpack_bits(data: bytes, nbits: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=nbits).astype(np.uint8)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


def xor_all(chunks) -> bytes:
    it = iter(chunks)
    acc = np.frombuffer(next(it), np.uint8).copy()
    for c in it:
        acc ^= np.frombuffer(c, np.uint8)
    return acc.tobytes()
