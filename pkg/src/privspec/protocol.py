"""Application frames exchanged between clients, PSDs and the SAS.

Requests start with a one-byte type. PSD replies start with a status
code; SAS decisions are ``u8 outcome || u8 stage``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import FormatError
from .location import Opening, ProofOfLocation


class MsgType(enum.IntEnum):
    QUERY = 0x10
    OOP_HANDSHAKE = 0x11
    SERVICE = 0x20


class Reject(enum.IntEnum):
    OK = 0x00
    BAD_PROOF = 0x01
    RATE_LIMITED = 0x02
    PROTOCOL = 0x03


class Stage(enum.IntEnum):
    GRANTED = 0
    SIGNATURE = 1
    POW = 2
    REPLAY = 3
    POL = 4
    OPENING = 5


def _take(data: bytes, off: int, n: int) -> tuple[bytes, int]:
    if off + n > len(data):
        raise FormatError("frame truncated")
    return data[off:off + n], off + n


def _lp(data: bytes, off: int) -> tuple[bytes, int]:
    raw, off = _take(data, off, 4)
    (n,) = struct.unpack("<I", raw)
    return _take(data, off, n)


@dataclass(frozen=True)
class QueryRequest:
    pir_frame: bytes
    pol: ProofOfLocation

    def encode(self) -> bytes:
        return bytes([MsgType.QUERY]) + struct.pack("<I", len(self.pir_frame)) + self.pir_frame + self.pol.to_bytes()

    @classmethod
    def decode(cls, data: bytes) -> "QueryRequest":
        if not data or data[0] != MsgType.QUERY:
            raise FormatError("not a query request")
        pir, off = _lp(data, 1)
        return cls(pir, ProofOfLocation.from_bytes(data[off:]))


@dataclass(frozen=True)
class ServiceRequest:
    token: bytes
    pol: ProofOfLocation
    commitment: bytes
    opening: Opening | None = None

    def encode(self) -> bytes:
        pol = self.pol.to_bytes()
        out = bytes([MsgType.SERVICE]) + struct.pack("<I", len(self.token)) + self.token
        out += struct.pack("<I", len(pol)) + pol + self.commitment
        if self.opening is None:
            return out + b"\x00"
        return out + b"\x01" + self.opening.encode()

    @classmethod
    def decode(cls, data: bytes) -> "ServiceRequest":
        if not data or data[0] != MsgType.SERVICE:
            raise FormatError("not a service request")
        token, off = _lp(data, 1)
        pol, off = _lp(data, off)
        com, off = _take(data, off, 32)
        flag, off = _take(data, off, 1)
        opening = None
        if flag == b"\x01":
            raw, off = _take(data, off, 28)
            opening = Opening.decode(raw)
        elif flag != b"\x00":
            raise FormatError("bad opening flag")
        if off != len(data):
            raise FormatError("trailing bytes in service request")
        return cls(token, ProofOfLocation.from_bytes(pol), com, opening)


def decision_frame(granted: bool, stage: int) -> bytes:
    return struct.pack("BB", 0 if granted else 1, stage)


def parse_decision(data: bytes) -> tuple[bool, int]:
    if len(data) != 2:
        raise FormatError("decision frame must be 2 bytes")
    return data[0] == 0, data[1]
