"""Proof of location: beacons, location commitments, proximity checks and
an event-oriented linkable ring signature over a Merkle ring of APs.

``H`` is SHA-256 (commitments) and ``H'`` is SHA3-256 (keys, event ids,
tags, ring tree). The signature-of-knowledge is pluggable; the default
:class:`IdealAttestor` checks the witness locally and signs the public
statement, so proofs carry no member key.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .errors import FormatError, InputError, MembershipError, ParameterError, ProximityError, StaleBeaconError
from .spectrum_db import GridCoordinate
from .util import random_bytes

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_DELTA_TH = 50.0      # metres
BEACON_PERIOD_S = 60
SK_BYTES = 32


def H(*parts: bytes) -> bytes:
    return hashlib.sha256(b"".join(parts)).digest()


def Hp(*parts: bytes) -> bytes:
    return hashlib.sha3_256(b"".join(parts)).digest()


def beacon_window(now: float, period_s: int = BEACON_PERIOD_S) -> int:
    return int(now // period_s)


# ----------------------------------------------------------------- beacons


@dataclass(frozen=True)
class Beacon:
    ap_hint: bytes
    window_id: int
    nonce: bytes     # 8 bytes


# -------------------------------------------------------------- commitment


@dataclass(frozen=True)
class Opening:
    coord: GridCoordinate
    beacon_nonce: bytes
    window_id: int
    r: bytes         # 4 bytes

    def encode(self) -> bytes:
        return (struct.pack(">II", self.coord.cell_x, self.coord.cell_y) + self.beacon_nonce
                + struct.pack(">Q", self.window_id) + self.r)

    @classmethod
    def decode(cls, data: bytes) -> "Opening":
        if len(data) != 8 + 8 + 8 + 4:
            raise FormatError("opening must be 28 bytes")
        x, y = struct.unpack_from(">II", data)
        (ts,) = struct.unpack_from(">Q", data, 16)
        return cls(GridCoordinate(x, y), data[8:16], ts, data[24:28])


@dataclass(frozen=True)
class LocationCommitment:
    digest: bytes
    opening: Opening


def commitment_digest(opening: Opening) -> bytes:
    return H(b"loc-commit", opening.encode())


def commit_location(coord: GridCoordinate, beacon: Beacon, rng=None, *, r: bytes | None = None) -> LocationCommitment:
    r = random_bytes(4, rng) if r is None else r
    if len(r) != 4:
        raise ParameterError("commitment nonce must be 4 bytes")
    op = Opening(coord, beacon.nonce, beacon.window_id, r)
    return LocationCommitment(commitment_digest(op), op)


def open_verify(digest: bytes, opening: Opening) -> bool:
    return commitment_digest(opening) == digest


# --------------------------------------------------------------- proximity


def prox_verif(rss_dbm: float, rtt_s: float, n_pl: float = 2.0, tx_power: float = 20.0,
               ref_loss: float = 40.0, ref_dist: float = 1.0, c: float = SPEED_OF_LIGHT) -> float:
    """Mean of the log-distance RSS estimate and the RTT estimate (metres)."""
    vals = (rss_dbm, rtt_s, n_pl, tx_power, ref_loss, ref_dist, c)
    if not all(math.isfinite(v) for v in vals):
        raise InputError("proximity inputs must be finite")
    if rtt_s < 0:
        raise InputError("round-trip time must be non-negative")
    if n_pl <= 0 or ref_dist <= 0 or c <= 0:
        raise InputError("environment parameters must be positive")
    d_rss = ref_dist * 10 ** ((tx_power - ref_loss - rss_dbm) / (10 * n_pl))
    d_rtt = rtt_s * c / 2
    return (d_rss + d_rtt) / 2


def rss_at(distance: float, n_pl: float = 2.0, tx_power: float = 20.0, ref_loss: float = 40.0,
           ref_dist: float = 1.0) -> float:
    """Forward log-distance model (noise-free), the inverse of the RSS estimate."""
    return tx_power - ref_loss - 10 * n_pl * math.log10(distance / ref_dist)


def rtt_at(distance: float, c: float = SPEED_OF_LIGHT) -> float:
    return 2 * distance / c


# ------------------------------------------------------------------- ring


def lrs_keygen(rng=None) -> tuple[bytes, bytes]:
    sk = random_bytes(SK_BYTES, rng)
    return sk, Hp(b"pk", sk)


def _leaf(pk: bytes) -> bytes:
    return Hp(b"\x00", pk)


def _node(left: bytes, right: bytes) -> bytes:
    return Hp(b"\x01", left, right)


@dataclass(frozen=True)
class MerklePath:
    index: int
    siblings: tuple[bytes, ...]

    def root_from(self, pk: bytes) -> bytes:
        h, idx = _leaf(pk), self.index
        for sib in self.siblings:
            h = _node(h, sib) if idx % 2 == 0 else _node(sib, h)
            idx //= 2
        return h


class RingContext:
    """Static ring of member keys with a precomputed Merkle tree."""

    def __init__(self, member_keys: Sequence[bytes]) -> None:
        n = len(member_keys)
        if n < 2 or n & (n - 1):
            raise ParameterError(f"ring size must be a power of two >= 2, got {n}")
        self.member_keys = tuple(member_keys)
        self._index = {pk: i for i, pk in enumerate(self.member_keys)}
        levels = [[_leaf(pk) for pk in self.member_keys]]
        while len(levels[-1]) > 1:
            prev = levels[-1]
            levels.append([_node(prev[i], prev[i + 1]) for i in range(0, len(prev), 2)])
        self._levels = levels

    @property
    def size(self) -> int:
        return len(self.member_keys)

    @property
    def root(self) -> bytes:
        return self._levels[-1][0]

    def index_of(self, pk: bytes) -> int:
        try:
            return self._index[pk]
        except KeyError:
            raise MembershipError("key is not a ring member") from None

    def path(self, index: int) -> MerklePath:
        sibs = []
        idx = index
        for level in self._levels[:-1]:
            sibs.append(level[idx ^ 1])
            idx //= 2
        return MerklePath(index, tuple(sibs))


def derive_event_id(sk_ap: bytes, beacon_nonce: bytes, window_id: int) -> bytes:
    return Hp(b"event", sk_ap, beacon_nonce, struct.pack(">Q", window_id))


def compute_tag(sk: bytes, event_id: bytes) -> bytes:
    return Hp(b"tag", sk, event_id)


# -------------------------------------------------------------------- SoK


@dataclass(frozen=True)
class Statement:
    root: bytes
    event_id: bytes
    tag: bytes
    message: bytes

    def digest(self) -> bytes:
        return Hp(b"lrs-statement", self.root, self.event_id, self.tag,
                  struct.pack(">I", len(self.message)), self.message)


@dataclass(frozen=True)
class Witness:
    sk: bytes
    path: MerklePath


class SokBackend(Protocol):
    name: str

    def prove(self, statement: Statement, witness: Witness) -> bytes: ...

    def verify(self, statement: Statement, proof: bytes) -> bool: ...


class IdealAttestor:
    """Checks the membership-and-tag relation, then signs the statement."""

    name = "ideal-attestor"

    def __init__(self, seed: bytes | None = None) -> None:
        self._key = Ed25519PrivateKey.from_private_bytes(Hp(b"attestor", seed or random_bytes(32)))
        self.verification_key = self._key.public_key().public_bytes_raw()
        self.prove_calls = 0

    def relation_holds(self, statement: Statement, witness: Witness) -> bool:
        pk = Hp(b"pk", witness.sk)
        return (witness.path.root_from(pk) == statement.root
                and compute_tag(witness.sk, statement.event_id) == statement.tag)

    def prove(self, statement: Statement, witness: Witness) -> bytes:
        self.prove_calls += 1
        if not self.relation_holds(statement, witness):
            raise MembershipError("witness does not satisfy the ring relation")
        return self._key.sign(statement.digest())

    def verify(self, statement: Statement, proof: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(self.verification_key).verify(proof, statement.digest())
        except (InvalidSignature, ValueError):
            return False
        return True


@dataclass(frozen=True)
class ProofOfLocation:
    commitment: bytes
    event_id: bytes
    tag: bytes
    ring_root: bytes
    proof: bytes

    def to_bytes(self) -> bytes:
        return (self.commitment + self.event_id + self.tag + self.ring_root
                + struct.pack("<I", len(self.proof)) + self.proof)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProofOfLocation":
        if len(data) < 132:
            raise FormatError("PoL truncated")
        (n,) = struct.unpack_from("<I", data, 128)
        if len(data) != 132 + n:
            raise FormatError("PoL length mismatch")
        return cls(data[0:32], data[32:64], data[64:96], data[96:128], data[132:])


def pol_message(commitment: bytes, window_id: int) -> bytes:
    return commitment + struct.pack(">Q", window_id)


def lrs_sign(event_id: bytes, sk: bytes, message: bytes, ring: RingContext, backend: SokBackend,
             commitment: bytes | None = None) -> ProofOfLocation:
    index = ring.index_of(Hp(b"pk", sk))
    tag = compute_tag(sk, event_id)
    st = Statement(ring.root, event_id, tag, message)
    proof = backend.prove(st, Witness(sk, ring.path(index)))
    return ProofOfLocation(commitment if commitment is not None else message[:32], event_id, tag, ring.root, proof)


def lrs_verify(event_id: bytes, pol: ProofOfLocation, message: bytes, ring: RingContext,
               backend: SokBackend) -> bool:
    if pol.event_id != event_id or pol.ring_root != ring.root:
        return False
    return backend.verify(Statement(ring.root, event_id, pol.tag, message), pol.proof)


def lrs_link(event_id: bytes, a: ProofOfLocation, b: ProofOfLocation) -> bool:
    return a.event_id == event_id and b.event_id == event_id and a.tag == b.tag


def pol_verify(pol: ProofOfLocation, ring: RingContext, window_id: int, backend: SokBackend) -> bool:
    """Service-side check: the PoL must be signed for this window's message."""
    return lrs_verify(pol.event_id, pol, pol_message(pol.commitment, window_id), ring, backend)


# --------------------------------------------------------------- protocol


@dataclass(frozen=True)
class PolRequest:
    commitment: bytes
    beacon_nonce: bytes
    window_id: int
    rss_dbm: float
    rtt_s: float


class AccessPoint:
    """Ring member that broadcasts beacons and answers PoL requests."""

    def __init__(self, ap_id: int, sk: bytes, ring: RingContext, backend: SokBackend, *,
                 delta_th: float = DEFAULT_DELTA_TH, env: dict | None = None) -> None:
        self.ap_id = ap_id
        self.sk = sk
        self.ring = ring
        self.backend = backend
        self.delta_th = delta_th
        self.env = env or {}
        self.beacon: Beacon | None = None
        self.proximity_checks = 0

    @property
    def hint(self) -> bytes:
        return struct.pack(">I", self.ap_id)

    def broadcast(self, window_id: int) -> Beacon:
        """One beacon per window, derived from the AP secret."""
        nonce = Hp(b"beacon", self.sk, struct.pack(">Q", window_id))[:8]
        self.beacon = Beacon(self.hint, window_id, nonce)
        return self.beacon

    def pol_respond(self, req: PolRequest) -> ProofOfLocation:
        b = self.beacon
        if b is None or req.beacon_nonce != b.nonce or req.window_id != b.window_id:
            raise StaleBeaconError("request does not carry the latest beacon")
        self.proximity_checks += 1
        dist = prox_verif(req.rss_dbm, req.rtt_s, **self.env)
        if dist > self.delta_th:
            raise ProximityError(f"estimated distance {dist:.1f} m exceeds {self.delta_th} m")
        eid = derive_event_id(self.sk, b.nonce, b.window_id)
        return lrs_sign(eid, self.sk, pol_message(req.commitment, b.window_id), self.ring, self.backend,
                        commitment=req.commitment)


def pol_request(coord: GridCoordinate, beacon: Beacon, rss_dbm: float, rtt_s: float,
                rng=None) -> tuple[PolRequest, LocationCommitment]:
    com = commit_location(coord, beacon, rng)
    return PolRequest(com.digest, beacon.nonce, beacon.window_id, rss_dbm, rtt_s), com
