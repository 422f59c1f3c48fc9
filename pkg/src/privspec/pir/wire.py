"""Frame encoding for PIR queries and answers.

``u8 scheme || u8 server || u32 length || payload``, little-endian.
Bit vectors are packed MSB-first; field elements are u32 each.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError
from ..spectrum_db import Scheme

_HEAD = struct.Struct("<BBI")


@dataclass(frozen=True)
class PirFrame:
    scheme: Scheme
    server_id: int
    payload: bytes

    def encode(self) -> bytes:
        return _HEAD.pack(int(self.scheme), self.server_id, len(self.payload)) + self.payload

    @classmethod
    def decode(cls, data: bytes) -> "PirFrame":
        if len(data) < _HEAD.size:
            raise FormatError("PIR frame truncated")
        scheme, server, n = _HEAD.unpack_from(data)
        if len(data) != _HEAD.size + n:
            raise FormatError("PIR frame length mismatch")
        try:
            return cls(Scheme(scheme), server, bytes(data[_HEAD.size:]))
        except ValueError:
            raise FormatError(f"unknown scheme id {scheme}") from None


def encode_bits(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def decode_bits(data: bytes, nbits: int) -> np.ndarray:
    if len(data) != (nbits + 7) // 8:
        raise FormatError("bit vector length mismatch")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=nbits)


def encode_field(vec) -> bytes:
    return np.asarray(vec, dtype="<u4").tobytes()


def decode_field(data: bytes) -> np.ndarray:
    if len(data) % 4:
        raise FormatError("field vector is not a whole number of u32 words")
    return np.frombuffer(data, dtype="<u4").astype(np.uint32)
