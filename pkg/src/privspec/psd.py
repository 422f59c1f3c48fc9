"""Private Spectrum Database node.

Request handling runs the checks in a fixed order: parse, PoL
verification, link check against the window's log, record, and only
then the PIR answer. A request failing several checks reports the
first one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .crypto import SignatureBackend, SigningKey
from .errors import BackpressureError, FormatError, GeometryError, SessionError
from .location import ProofOfLocation, RingContext, SokBackend, pol_verify
from .pir import (
    PirFrame,
    decode_bits,
    decode_field,
    encode_field,
    ens_respond_batch,
    ftr_respond_batch,
    oop_offline_handshake,
    oop_preprocess,
    oop_refill,
    oop_respond,
)
from .pir.ftr import DEFAULT_MODULUS, db_words
from .pir.oop import OopState
from .pow import PowKind
from .protocol import MsgType, QueryRequest, Reject
from .spectrum_db import (
    BoundPuzzle,
    DbMatrix,
    Scheme,
    puzzle_bind,
    puzzle_signing_message,
    validity_window,
)


@dataclass
class PolLog:
    """``(e_ID, tag)`` pairs seen in the current beacon window."""

    window: int = -1
    entries: set[tuple[bytes, bytes]] = field(default_factory=set)

    def rotate(self, window: int) -> None:
        if window != self.window:
            self.window = window
            self.entries.clear()

    def linked(self, pol: ProofOfLocation) -> bool:
        # same event id and equal tag is the link predicate
        return (pol.event_id, pol.tag) in self.entries

    def record(self, pol: ProofOfLocation) -> None:
        self.entries.add((pol.event_id, pol.tag))


@dataclass
class PsdConfig:
    server_id: int
    n_servers: int
    scheme: Scheme
    ftr_t: int = 1
    modulus: int = DEFAULT_MODULUS
    oop_t: int | None = None
    oop_queue: int = 8
    workers: int = 1
    pow_kind: PowKind = PowKind.HCT
    difficulties: tuple[int, ...] = (8,)
    n_leaves: int = 4
    validity_s: int = 3600


class PsdNode:
    def __init__(self, cfg: PsdConfig, db: DbMatrix, signer: SigningKey, sig_backend: SignatureBackend,
                 ring: RingContext, sok: SokBackend, *, node_id: str | None = None, pol_log: PolLog | None = None,
                 rng=None) -> None:
        self.cfg = cfg
        self.node_id = node_id or f"psd-{cfg.server_id}"
        self.db = db
        self.signer = signer
        self.sig_backend = sig_backend
        self.ring = ring
        self.sok = sok
        self.pol_log = pol_log if pol_log is not None else PolLog()
        self.rng = rng
        self.puzzle_window = -1
        self.counts = {code: 0 for code in Reject}
        self.oop_state: OopState | None = None
        self._words = None
        self._install(db)

    # ------------------------------------------------------------ state

    def _install(self, db: DbMatrix) -> None:
        self.db = db
        self._words = db_words(db) if self.cfg.scheme == Scheme.FTR else None
        if self.cfg.scheme == Scheme.OOP:
            self.oop_state = oop_preprocess(db, self.cfg.n_servers, self.cfg.oop_t, self.cfg.oop_queue, self.rng,
                                            workers=self.cfg.workers, servers=[self.cfg.server_id])

    def public_key(self) -> bytes:
        return self.signer.public_bytes

    def sign_puzzle(self, theta: int, puzzle: BoundPuzzle | bytes, window: int | None = None) -> bytes:
        if isinstance(puzzle, bytes):
            puzzle = BoundPuzzle(self.cfg.pow_kind, self.cfg.difficulties[0], puzzle)
        w = self.puzzle_window if window is None else window
        return self.signer.sign(puzzle_signing_message(theta, [puzzle], w))

    def refresh_puzzles(self, now: float, beacon_window: int | None = None, *, db: DbMatrix | None = None) -> bool:
        """Rebind puzzles when the validity window changed; rotate the PoL log.

        ``db`` installs an already rebound replica (all PSDs of a
        deployment must hold identical payloads). Returns True if the
        puzzles changed.
        """
        if beacon_window is not None:
            self.pol_log.rotate(beacon_window)
        w = validity_window(now, self.cfg.validity_s)
        if w == self.puzzle_window:
            return False
        self.puzzle_window = w
        if db is None:
            db = puzzle_bind(self.db, self.signer, self.cfg.pow_kind, list(self.cfg.difficulties), window=w,
                             rng=self.rng, n_leaves=self.cfg.n_leaves)
        self._install(db)
        return True

    def rotate_window(self, beacon_window: int) -> None:
        self.pol_log.rotate(beacon_window)

    # ---------------------------------------------------------- queries

    def _reject(self, code: Reject) -> bytes:
        self.counts[code] += 1
        return bytes([code])

    def _admit(self, data: bytes) -> tuple[bytes | None, PirFrame | None]:
        """Run parse -> PoL verify -> link -> record. Returns (rejection, frame)."""
        try:
            req = QueryRequest.decode(data)
            frame = PirFrame.decode(req.pir_frame)
        except (FormatError, ValueError, struct.error):
            return self._reject(Reject.PROTOCOL), None
        if frame.scheme != self.cfg.scheme or frame.server_id != self.cfg.server_id:
            return self._reject(Reject.PROTOCOL), None
        if not pol_verify(req.pol, self.ring, self.pol_log.window, self.sok):
            return self._reject(Reject.BAD_PROOF), None
        if self.pol_log.linked(req.pol):
            return self._reject(Reject.RATE_LIMITED), None
        self.pol_log.record(req.pol)
        return None, frame

    def _answer(self, payload: bytes) -> bytes:
        self.counts[Reject.OK] += 1
        return bytes([Reject.OK]) + PirFrame(self.cfg.scheme, self.cfg.server_id, payload).encode()

    def handle(self, data: bytes) -> bytes:
        """Entry point for any frame arriving over the transport."""
        if data[:1] == bytes([MsgType.OOP_HANDSHAKE]):
            return self.handle_handshake()
        return self.handle_batch([data])[0]

    def handle_spectrum_query(self, data: bytes) -> bytes:
        return self.handle_batch([data])[0]

    def handle_handshake(self) -> bytes:
        if self.cfg.scheme != Scheme.OOP or self.oop_state is None:
            return self._reject(Reject.PROTOCOL)
        try:
            sid, seed = oop_offline_handshake(self.oop_state, self.cfg.server_id)
        except BackpressureError:
            oop_refill(self.oop_state, self.cfg.server_id, self.cfg.oop_queue, self.rng, self.cfg.workers)
            sid, seed = oop_offline_handshake(self.oop_state, self.cfg.server_id)
        layout = self.oop_state.layouts[self.cfg.server_id]
        return bytes([Reject.OK]) + struct.pack("<I", sid) + seed + bytes([len(layout), *layout])

    def handle_batch(self, requests: list[bytes]) -> list[bytes]:
        """Admit every request in arrival order, then answer admitted ones in one batch."""
        out: list[bytes | None] = [None] * len(requests)
        admitted: list[tuple[int, PirFrame]] = []
        for i, data in enumerate(requests):
            rej, frame = self._admit(data)
            if rej is not None:
                out[i] = rej
            else:
                admitted.append((i, frame))
        if not admitted:
            return out
        scheme = self.cfg.scheme
        try:
            if scheme == Scheme.ENS:
                shares = np.stack([decode_bits(f.payload, self.db.rows) for _, f in admitted])
                for (i, _), ans in zip(admitted, ens_respond_batch(shares, self.db, self.cfg.workers)):
                    out[i] = self._answer(ans)
            elif scheme == Scheme.FTR:
                Q = np.stack([decode_field(f.payload) for _, f in admitted])
                if Q.shape[1] != self.db.rows or (Q >= self.cfg.modulus).any():
                    raise GeometryError("field query does not match the database")
                ans = ftr_respond_batch(Q, self.db, self.cfg.modulus, self.cfg.workers, words=self._words)
                for (i, _), row in zip(admitted, ans):
                    out[i] = self._answer(encode_field(row))
            else:
                for i, f in admitted:
                    (sid,) = struct.unpack_from("<I", f.payload)
                    bits = decode_bits(f.payload[4:], self.oop_state.blocks_per_chunk)
                    out[i] = self._answer(oop_respond(self.oop_state, self.cfg.server_id, sid, bits))
        except (FormatError, GeometryError, SessionError, struct.error):
            for i, _ in admitted:
                if out[i] is None:
                    out[i] = self._reject(Reject.PROTOCOL)
        return out
