"""Spectrum database: grid indexing, block layout, puzzle binding,
delta compression and the shared on-disk format.

A block holds one serialized :class:`SpectrumRecord` (560 bytes), the
bound puzzles, the validity window they were signed for and the issuer
signature, zero-padded to exactly ``block_bits``.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

import numpy as np

from .crypto import SignatureBackend, SigningKey
from .errors import CapacityError, DimensionError, FormatError, OrderingError, ParameterError
from .pow import PowKind, decode_puzzle, hct_gen, lbp_gen

RECORD_BYTES = 560
DEFAULT_BLOCK_BITS = 24576
WORD_BITS = 8
DEFAULT_VALIDITY_S = 3600
DEFAULT_EIRP_RANGE = (-3000, 3600)  # centi-dBm

_RECORD_FMT = struct.Struct("<IIHIiB")


class Scheme(enum.IntEnum):
    NONE = 0
    ENS = 1
    FTR = 2
    OOP = 3

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ParameterError(f"unknown PIR scheme {name!r}") from None


@dataclass(frozen=True, order=True)
class GridCoordinate:
    cell_x: int
    cell_y: int


@dataclass(frozen=True)
class GridDims:
    n_cols: int
    n_rows: int
    n_ch: int = 1
    n_tv: int = 1

    def __post_init__(self) -> None:
        for name in ("n_cols", "n_rows", "n_ch", "n_tv"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")

    @property
    def rows(self) -> int:
        return self.n_cols * self.n_rows * self.n_ch * self.n_tv


@dataclass(frozen=True)
class SpectrumRecord:
    coord: GridCoordinate
    channel: int
    time_window: int
    eirp_cdbm: int          # fixed point, 0.01 dBm
    availability: bool

    def sort_key(self) -> tuple[int, int, int, int]:
        return (self.coord.cell_y, self.coord.cell_x, self.channel, self.time_window)

    def to_bytes(self) -> bytes:
        head = _RECORD_FMT.pack(self.coord.cell_x, self.coord.cell_y, self.channel,
                                self.time_window, self.eirp_cdbm, int(self.availability))
        return head + bytes(RECORD_BYTES - len(head))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SpectrumRecord":
        if len(data) < RECORD_BYTES:
            raise FormatError("record truncated")
        x, y, ch, tv, eirp, avail = _RECORD_FMT.unpack_from(data)
        if avail > 1:
            raise FormatError("availability flag must be 0 or 1")
        return cls(GridCoordinate(x, y), ch, tv, eirp, bool(avail))


class IndexEncoder(Protocol):
    dims: GridDims

    def index(self, coord: GridCoordinate, channel: int, time_window: int) -> int: ...

    def inverse(self, theta: int) -> tuple[GridCoordinate, int, int]: ...


@dataclass(frozen=True)
class RowMajorIndex:
    """theta = ((cell_y * n_cols + cell_x) * n_ch + channel) * n_tv + time_window."""

    dims: GridDims

    def index(self, coord: GridCoordinate, channel: int, time_window: int) -> int:
        d = self.dims
        for name, value, limit in (("cell_x", coord.cell_x, d.n_cols), ("cell_y", coord.cell_y, d.n_rows),
                                   ("channel", channel, d.n_ch), ("time_window", time_window, d.n_tv)):
            if not 0 <= value < limit:
                raise DimensionError(name, value, limit)
        return ((coord.cell_y * d.n_cols + coord.cell_x) * d.n_ch + channel) * d.n_tv + time_window

    def inverse(self, theta: int) -> tuple[GridCoordinate, int, int]:
        d = self.dims
        if not 0 <= theta < d.rows:
            raise DimensionError("theta", theta, d.rows)
        rest, tv = divmod(theta, d.n_tv)
        rest, ch = divmod(rest, d.n_ch)
        y, x = divmod(rest, d.n_cols)
        return GridCoordinate(x, y), ch, tv


def db_index(coord: GridCoordinate, channel: int, time_window: int, dims: GridDims) -> int:
    return RowMajorIndex(dims).index(coord, channel, time_window)


# ------------------------------------------------------------------ blocks


@dataclass(frozen=True)
class BoundPuzzle:
    kind: PowKind
    difficulty: int
    data: bytes

    def decode(self):
        return decode_puzzle(self.kind, self.data)


@dataclass(frozen=True)
class DbEntryBlock:
    record: SpectrumRecord
    puzzles: tuple[BoundPuzzle, ...] = ()
    validity_window: int = 0
    issuer_sig: bytes = b""

    def encode(self, block_bits: int) -> bytes:
        out = bytearray(self.record.to_bytes())
        out += struct.pack("<B", len(self.puzzles))
        for pz in self.puzzles:
            out += struct.pack("<BII", pz.kind, pz.difficulty, len(pz.data)) + pz.data
        out += struct.pack("<QH", self.validity_window, len(self.issuer_sig)) + self.issuer_sig
        cap = block_bits // 8
        if len(out) > cap:
            raise CapacityError(f"block needs {len(out) * 8} bits, block size is {block_bits}")
        return bytes(out) + bytes(cap - len(out))

    @classmethod
    def decode(cls, data: bytes) -> "DbEntryBlock":
        record = SpectrumRecord.from_bytes(data)
        off = RECORD_BYTES
        try:
            (count,) = struct.unpack_from("<B", data, off)
            off += 1
            puzzles = []
            for _ in range(count):
                kind, kappa, n = struct.unpack_from("<BII", data, off)
                off += 9
                if off + n > len(data):
                    raise FormatError("puzzle overruns block")
                puzzles.append(BoundPuzzle(PowKind(kind), kappa, bytes(data[off:off + n])))
                off += n
            window, slen = struct.unpack_from("<QH", data, off)
            off += 10
        except (struct.error, ValueError) as exc:
            raise FormatError(f"malformed block: {exc}") from None
        if off + slen > len(data):
            raise FormatError("signature overruns block")
        return cls(record, tuple(puzzles), window, bytes(data[off:off + slen]))


def puzzle_signing_message(theta: int, puzzles: Sequence[BoundPuzzle], validity_window: int) -> bytes:
    """Signed payload: theta || validity window || every bound puzzle."""
    out = b"PSD-PUZZLE" + struct.pack("<IQB", theta, validity_window, len(puzzles))
    for pz in puzzles:
        out += struct.pack("<BII", pz.kind, pz.difficulty, len(pz.data)) + pz.data
    return out


def verify_block(block: DbEntryBlock, theta: int, public_key: bytes, backend: SignatureBackend,
                 current_window: int | None = None) -> bool:
    """Signature check plus optional freshness (validity window must be current)."""
    if not block.puzzles:
        return False
    if current_window is not None and block.validity_window != current_window:
        return False
    msg = puzzle_signing_message(theta, block.puzzles, block.validity_window)
    return backend.verify(public_key, msg, block.issuer_sig)


# ------------------------------------------------------------------ matrix


@dataclass(frozen=True)
class DbMatrix:
    """``rows`` blocks of ``block_bits`` bits, row-major, read-only."""

    rows: int
    block_bits: int
    payload: np.ndarray = field(repr=False)
    scheme: Scheme = Scheme.NONE
    pow_kind: PowKind = PowKind.NONE

    def __post_init__(self) -> None:
        if self.block_bits % 64:
            raise ParameterError("block_bits must be a multiple of 64")
        if self.payload.shape != (self.rows, self.block_bits // 8) or self.payload.dtype != np.uint8:
            raise ParameterError("payload shape/dtype mismatch")
        self.payload.setflags(write=False)

    @property
    def words_per_row(self) -> int:
        return self.block_bits // WORD_BITS

    @property
    def row_bytes(self) -> int:
        return self.block_bits // 8

    def row(self, theta: int) -> bytes:
        return self.payload[theta].tobytes()

    def block(self, theta: int) -> DbEntryBlock:
        return DbEntryBlock.decode(self.row(theta))

    def with_rows(self, payload: np.ndarray, **changes) -> "DbMatrix":
        return replace(self, payload=payload, **changes)

    def digest(self) -> bytes:
        return hashlib.sha256(self.payload.tobytes()).digest()

    @classmethod
    def from_rows(cls, rows: Sequence[bytes], block_bits: int, **kw) -> "DbMatrix":
        arr = np.frombuffer(b"".join(rows), dtype=np.uint8).reshape(len(rows), block_bits // 8).copy()
        return cls(len(rows), block_bits, arr, **kw)


def build_db(records: Iterable[SpectrumRecord], dims: GridDims, block_bits: int = DEFAULT_BLOCK_BITS,
             eirp_range: tuple[int, int] = DEFAULT_EIRP_RANGE, encoder: IndexEncoder | None = None) -> DbMatrix:
    """Lay records out by index; cells without a record are marked unavailable."""
    encoder = encoder or RowMajorIndex(dims)
    lo, hi = eirp_range
    slots: dict[int, SpectrumRecord] = {}
    for rec in records:
        theta = encoder.index(rec.coord, rec.channel, rec.time_window)
        if not lo <= rec.eirp_cdbm <= hi:
            raise DimensionError("eirp_cdbm", rec.eirp_cdbm, hi + 1)
        if theta in slots:
            raise ParameterError(f"duplicate record for row {theta}")
        slots[theta] = rec
    cap = block_bits // 8
    payload = np.zeros((dims.rows, cap), dtype=np.uint8)
    for theta in range(dims.rows):
        rec = slots.get(theta)
        if rec is None:
            coord, ch, tv = encoder.inverse(theta)
            rec = SpectrumRecord(coord, ch, tv, lo, False)
        payload[theta] = np.frombuffer(DbEntryBlock(rec).encode(block_bits), dtype=np.uint8)
    return DbMatrix(dims.rows, block_bits, payload)


def validity_window(now: float, validity_s: int = DEFAULT_VALIDITY_S) -> int:
    return int(now // validity_s)


def puzzle_bind(db: DbMatrix, signer: SigningKey, pow_kind: PowKind | str, difficulties: Sequence[int],
                *, window: int = 0, rng=None, n_leaves: int = 4, lbp_dim: int | None = None,
                lam: int = 256) -> DbMatrix:
    """Attach freshly generated, signed puzzles to every row (copy-on-rebind).

    Re-binding replaces previous puzzles. For LBP, ``difficulties`` are
    lattice dimensions unless ``lbp_dim`` fixes one.
    """
    if not difficulties:
        return db
    kind = PowKind.parse(pow_kind)
    out = np.empty_like(db.payload)
    for theta in range(db.rows):
        block = db.block(theta)
        puzzles = []
        for kappa in difficulties:
            if kind == PowKind.HCT:
                data = hct_gen(lam, kappa, n_leaves, rng).to_bytes()
            elif kind == PowKind.LBP:
                data = lbp_gen(lam, lbp_dim or kappa, kappa, rng).to_bytes()
            else:
                raise ParameterError("pow_kind must be HCT or LBP")
            puzzles.append(BoundPuzzle(kind, kappa, data))
        sig = signer.sign(puzzle_signing_message(theta, puzzles, window))
        fresh = DbEntryBlock(block.record, tuple(puzzles), window, sig)
        out[theta] = np.frombuffer(fresh.encode(db.block_bits), dtype=np.uint8)
    return db.with_rows(out, pow_kind=kind)


# ------------------------------------------------------------- compression


def _zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v) << 1) - 1


def _unzigzag(u: int) -> int:
    return (u >> 1) if not u & 1 else -((u + 1) >> 1)


def _put_varint(out: bytearray, u: int) -> None:
    while True:
        byte = u & 0x7F
        u >>= 7
        if u:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _get_varint(data: bytes, off: int) -> tuple[int, int]:
    shift = value = 0
    while True:
        if off >= len(data):
            raise FormatError("varint truncated")
        b = data[off]
        off += 1
        value |= (b & 0x7F) << shift
        if not b & 0x80:
            return value, off
        shift += 7


def _fields(rec: SpectrumRecord) -> tuple[int, ...]:
    return (rec.coord.cell_y, rec.coord.cell_x, rec.channel, rec.time_window, rec.eirp_cdbm, int(rec.availability))


def delta_fields(records: Sequence[SpectrumRecord]) -> list[tuple[int, ...]]:
    """Per-field differences of successive records (first against zero)."""
    prev = (0,) * 6
    out = []
    for rec in records:
        cur = _fields(rec)
        out.append(tuple(c - p for c, p in zip(cur, prev)))
        prev = cur
    return out


def compress_rows(records: Sequence[SpectrumRecord]) -> bytes:
    """Varint/zigzag coding of per-field deltas of records sorted by index."""
    if not records:
        return b""
    for a, b in zip(records, records[1:]):
        if b.sort_key() < a.sort_key():
            raise OrderingError("records must be sorted by row index")
    out = bytearray()
    _put_varint(out, len(records))
    for deltas in delta_fields(records):
        for d in deltas:
            _put_varint(out, _zigzag(d))
    return bytes(out)


def decompress_rows(data: bytes) -> list[SpectrumRecord]:
    if not data:
        return []
    count, off = _get_varint(data, 0)
    prev = [0] * 6
    out = []
    for _ in range(count):
        cur = []
        for k in range(6):
            u, off = _get_varint(data, off)
            cur.append(prev[k] + _unzigzag(u))
        y, x, ch, tv, eirp, avail = cur
        if avail not in (0, 1):
            raise FormatError("availability flag must be 0 or 1")
        out.append(SpectrumRecord(GridCoordinate(x, y), ch, tv, eirp, bool(avail)))
        prev = cur
    if off != len(data):
        raise FormatError("trailing bytes after compressed records")
    return out


# ---------------------------------------------------------------- on disk

MAGIC = b"QPDB"
FILE_VERSION = 1
_HEADER = struct.Struct("<4sHIIBB")


def db_save(db: DbMatrix, path) -> None:
    body = db.payload.tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FILE_VERSION, db.rows, db.block_bits, int(db.scheme), int(db.pow_kind)))
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())


def db_load(path) -> DbMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size + 32:
        raise FormatError("file truncated")
    magic, version, rows, bits, scheme, kind = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad magic")
    if version != FILE_VERSION:
        raise FormatError(f"unsupported version {version}")
    if bits % 64:
        raise FormatError("block size must be a multiple of 64 bits")
    size = rows * bits // 8
    if len(data) != _HEADER.size + size + 32:
        raise FormatError("payload length does not match header")
    body = data[_HEADER.size:_HEADER.size + size]
    if hashlib.sha256(body).digest() != data[-32:]:
        raise FormatError("payload digest mismatch")
    try:
        scheme_e, kind_e = Scheme(scheme), PowKind(kind)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    arr = np.frombuffer(body, dtype=np.uint8).reshape(rows, bits // 8).copy()
    return DbMatrix(rows, bits, arr, scheme_e, kind_e)
