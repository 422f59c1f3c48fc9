"""Service endpoint: tokens, replay log and the final access decision."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from .crypto import SignatureBackend
from .errors import FormatError, SignatureError
from .location import RingContext, SokBackend, commitment_digest, pol_verify
from .pow import PowKind, decode_puzzle, solve_to_bytes, verify_bytes
from .protocol import ServiceRequest, Stage, decision_frame
from .spectrum_db import BoundPuzzle, DbEntryBlock, puzzle_signing_message


@dataclass(frozen=True)
class Token:
    theta: int
    window: int
    puzzles: tuple[BoundPuzzle, ...]
    choice: int
    signature: bytes
    solution: bytes

    @property
    def puzzle(self) -> BoundPuzzle:
        return self.puzzles[self.choice]

    def to_bytes(self) -> bytes:
        out = struct.pack("<IQBB", self.theta, self.window, len(self.puzzles), self.choice)
        for pz in self.puzzles:
            out += struct.pack("<BII", pz.kind, pz.difficulty, len(pz.data)) + pz.data
        out += struct.pack("<H", len(self.signature)) + self.signature
        return out + struct.pack("<I", len(self.solution)) + self.solution

    @classmethod
    def from_bytes(cls, data: bytes) -> "Token":
        try:
            theta, window, count, choice = struct.unpack_from("<IQBB", data)
            off = 14
            puzzles = []
            for _ in range(count):
                kind, kappa, n = struct.unpack_from("<BII", data, off)
                off += 9
                puzzles.append(BoundPuzzle(PowKind(kind), kappa, data[off:off + n]))
                off += n
            (slen,) = struct.unpack_from("<H", data, off)
            sig = data[off + 2:off + 2 + slen]
            off += 2 + slen
            (n,) = struct.unpack_from("<I", data, off)
            sol = data[off + 4:off + 4 + n]
            off += 4 + n
        except (struct.error, ValueError) as exc:
            raise FormatError(f"malformed token: {exc}") from None
        if off != len(data) or choice >= max(count, 1):
            raise FormatError("token length or puzzle choice is inconsistent")
        return cls(theta, window, tuple(puzzles), choice, sig, sol)

    def replay_key(self) -> bytes:
        return hashlib.sha256(self.puzzle.data + self.solution).digest()


def token_context(theta: int, window: int) -> bytes:
    return b"token" + struct.pack("<IQ", theta, window)


def create_token(block: DbEntryBlock, theta: int, psd_public_key: bytes, backend: SignatureBackend, *,
                 choice: int = 0, current_window: int | None = None, rng=None) -> Token:
    """Verify the issuer signature, then solve the chosen puzzle.

    An invalid or stale signature aborts before any work is spent.
    """
    msg = puzzle_signing_message(theta, block.puzzles, block.validity_window)
    if not block.puzzles or not backend.verify(psd_public_key, msg, block.issuer_sig):
        raise SignatureError("puzzle signature does not verify")
    if current_window is not None and block.validity_window != current_window:
        raise SignatureError("puzzle is outside its validity window")
    pz = block.puzzles[choice]
    sol = solve_to_bytes(pz.kind, pz.decode(), token_context(theta, block.validity_window), rng)
    return Token(theta, block.validity_window, block.puzzles, choice, block.issuer_sig, sol)


@dataclass(frozen=True)
class ServiceDecision:
    granted: bool
    stage: Stage
    token_digest: bytes = b""

    def frame(self) -> bytes:
        return decision_frame(self.granted, int(self.stage))


@dataclass
class SasServer:
    psd_public_key: bytes
    sig_backend: SignatureBackend
    ring: RingContext
    sok: SokBackend
    validity_s: int = 3600
    node_id: str = "sas"
    replay_log: dict[bytes, int] = field(default_factory=dict)
    decisions: list[ServiceDecision] = field(default_factory=list)
    calls: dict[str, int] = field(default_factory=lambda: {"signature": 0, "pow": 0, "pol": 0, "opening": 0})

    def purge(self, puzzle_window: int) -> None:
        """Drop replay entries whose puzzle window has passed."""
        self.replay_log = {k: w for k, w in self.replay_log.items() if w >= puzzle_window}

    def _decide(self, granted: bool, stage: Stage, digest: bytes = b"") -> ServiceDecision:
        d = ServiceDecision(granted, stage, digest)
        self.decisions.append(d)
        return d

    def handle_service_request(self, req: ServiceRequest, puzzle_window: int, beacon_window: int) -> ServiceDecision:
        try:
            token = Token.from_bytes(req.token)
        except FormatError:
            return self._decide(False, Stage.SIGNATURE)
        # 1: issuer signature over (theta, window, puzzles), and freshness
        self.calls["signature"] += 1
        msg = puzzle_signing_message(token.theta, token.puzzles, token.window)
        if token.window != puzzle_window or not self.sig_backend.verify(self.psd_public_key, msg, token.signature):
            return self._decide(False, Stage.SIGNATURE)
        # 2: proof of work
        self.calls["pow"] += 1
        try:
            puzzle = decode_puzzle(token.puzzle.kind, token.puzzle.data)
        except (FormatError, ValueError):
            return self._decide(False, Stage.POW)
        if not verify_bytes(token.puzzle.kind, puzzle, token.solution, token_context(token.theta, token.window)):
            return self._decide(False, Stage.POW)
        # 3: single use
        key = token.replay_key()
        if key in self.replay_log:
            return self._decide(False, Stage.REPLAY, key)
        self.replay_log[key] = token.window
        # 4: proof of location for this beacon window
        self.calls["pol"] += 1
        if req.pol.commitment != req.commitment or not pol_verify(req.pol, self.ring, beacon_window, self.sok):
            return self._decide(False, Stage.POL, key)
        # 5: optional commitment opening
        if req.opening is not None:
            self.calls["opening"] += 1
            if req.opening.window_id != beacon_window or commitment_digest(req.opening) != req.commitment:
                return self._decide(False, Stage.OPENING, key)
        return self._decide(True, Stage.GRANTED, key)

    def handle(self, data: bytes, puzzle_window: int, beacon_window: int) -> bytes:
        try:
            req = ServiceRequest.decode(data)
        except (FormatError, ValueError, struct.error):
            return self._decide(False, Stage.SIGNATURE).frame()
        return self.handle_service_request(req, puzzle_window, beacon_window).frame()
