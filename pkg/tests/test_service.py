import struct

import numpy as np
import pytest

from privspec.crypto import signature_backend
from privspec.errors import FormatError, SignatureError
from privspec.location import AccessPoint, IdealAttestor, RingContext, lrs_keygen, pol_request, rss_at, rtt_at
from privspec.pir import (
    PirFrame,
    decode_field,
    encode_bits,
    encode_field,
    ens_query_gen,
    ens_reconstruct,
    ftr_query_gen,
    ftr_reconstruct,
)
from privspec.protocol import MsgType, QueryRequest, Reject, ServiceRequest, Stage, parse_decision
from privspec.psd import PolLog, PsdConfig, PsdNode
from privspec.sas import SasServer, Token, create_token
from privspec.spectrum_db import DbEntryBlock, GridCoordinate, GridDims, Scheme, build_db, puzzle_bind

BLOCK = 4096 * 8


class World:
    def __init__(self, rng, scheme=Scheme.ENS, n=2):
        self.rng = rng
        keys = [lrs_keygen(rng) for _ in range(4)]
        self.ring = RingContext([pk for _, pk in keys])
        self.sok = IdealAttestor(b"\x05" * 32)
        self.aps = [AccessPoint(i, sk, self.ring, self.sok) for i, (sk, _) in enumerate(keys)]
        self.sig = signature_backend("stub")
        self.key = self.sig.keygen(rng)
        base = build_db([], GridDims(8, 1), BLOCK)
        cfgs = [PsdConfig(i, n, scheme, ftr_t=1) for i in range(n)]
        self.psds = [PsdNode(c, base, self.key, self.sig, self.ring, self.sok, rng=rng) for c in cfgs]
        self.psds[0].refresh_puzzles(0.0, 0)
        for p in self.psds[1:]:
            p.refresh_puzzles(0.0, 0, db=self.psds[0].db)
        self.sas = SasServer(self.key.public_bytes, self.sig, self.ring, self.sok)

    def pol(self, ap=0, window=0, coord=GridCoordinate(1, 0)):
        req, com = pol_request(coord, self.aps[ap].broadcast(window), rss_at(5), rtt_at(5), self.rng)
        return self.aps[ap].pol_respond(req), com


def _ens_query(w, theta, pol):
    q = ens_query_gen(theta, 8, len(w.psds), w.rng)
    replies = []
    for i, psd in enumerate(w.psds):
        frame = PirFrame(Scheme.ENS, i, encode_bits(q.shares[i])).encode()
        replies.append(psd.handle(QueryRequest(frame, pol).encode()))
    return replies


def test_psd_ens_flow_returns_signed_block(rng):
    w = World(rng)
    pol, _ = w.pol()
    replies = _ens_query(w, 3, pol)
    assert all(r[0] == Reject.OK for r in replies)
    row = ens_reconstruct([PirFrame.decode(r[1:]).payload for r in replies])
    assert row == w.psds[0].db.row(3)
    block = DbEntryBlock.decode(row)
    assert block.validity_window == 0 and block.puzzles


def test_psd_ftr_flow(rng):
    w = World(rng, Scheme.FTR, 3)
    pol, _ = w.pol()
    q = ftr_query_gen(5, 8, 3, 1, rng=rng)
    answers = []
    for i, psd in enumerate(w.psds):
        r = psd.handle(QueryRequest(PirFrame(Scheme.FTR, i, encode_field(q.vectors[i])).encode(), pol).encode())
        assert r[0] == Reject.OK
        answers.append(decode_field(PirFrame.decode(r[1:]).payload))
    assert ftr_reconstruct(answers, 1) == w.psds[0].db.row(5)


def test_psd_oop_handshake_and_protocol_errors(rng):
    w = World(rng, Scheme.OOP, 2)
    reply = w.psds[1].handle(bytes([MsgType.OOP_HANDSHAKE]))
    assert reply[0] == Reject.OK
    sid = struct.unpack_from("<I", reply, 1)[0]
    assert list(reply[22:]) == [1, 0]  # layout: own chunk first
    pol, _ = w.pol()
    bits = encode_bits(np.zeros(4, dtype=np.uint8))
    good = PirFrame(Scheme.OOP, 1, struct.pack("<I", sid) + bits).encode()
    assert w.psds[1].handle(QueryRequest(good, pol).encode())[0] == Reject.OK
    pol2, _ = w.pol(ap=1)
    assert w.psds[1].handle(QueryRequest(good, pol2).encode()) == bytes([Reject.PROTOCOL])  # session reused


def test_psd_check_order(rng):
    w = World(rng)
    psd = w.psds[0]
    pol, _ = w.pol()
    good = PirFrame(Scheme.ENS, 0, encode_bits(np.zeros(8, dtype=np.uint8))).encode()
    assert psd.handle(b"\x10junk") == bytes([Reject.PROTOCOL])
    wrong_server = PirFrame(Scheme.ENS, 1, encode_bits(np.zeros(8, dtype=np.uint8))).encode()
    assert psd.handle(QueryRequest(wrong_server, pol).encode()) == bytes([Reject.PROTOCOL])
    stale, _ = w.pol(window=7)
    assert psd.handle(QueryRequest(good, stale).encode()) == bytes([Reject.BAD_PROOF])
    assert psd.handle(QueryRequest(good, pol).encode())[0] == Reject.OK
    again, _ = w.pol()
    assert psd.handle(QueryRequest(good, again).encode()) == bytes([Reject.RATE_LIMITED])
    short = PirFrame(Scheme.ENS, 0, b"\x00\x00").encode()
    other, _ = w.pol(ap=2)
    assert psd.handle(QueryRequest(short, other).encode()) == bytes([Reject.PROTOCOL])
    assert psd.counts[Reject.RATE_LIMITED] == 1 and psd.counts[Reject.BAD_PROOF] == 1


def test_pol_log_rotation_resets_links(rng):
    w = World(rng)
    psd = w.psds[0]
    good = PirFrame(Scheme.ENS, 0, encode_bits(np.zeros(8, dtype=np.uint8))).encode()
    assert psd.handle(QueryRequest(good, w.pol()[0]).encode())[0] == Reject.OK
    psd.rotate_window(1)
    assert psd.handle(QueryRequest(good, w.pol(window=1)[0]).encode())[0] == Reject.OK
    log = PolLog()
    log.rotate(3)
    assert log.window == 3


def test_batch_admission_in_arrival_order(rng):
    w = World(rng)
    psd = w.psds[0]
    pol, _ = w.pol()
    frames = [QueryRequest(PirFrame(Scheme.ENS, 0, encode_bits(rng.integers(0, 2, 8, dtype=np.uint8))).encode(),
                           pol).encode() for _ in range(5)]
    out = psd.handle_batch(frames)
    assert out[0][0] == Reject.OK and all(o == bytes([Reject.RATE_LIMITED]) for o in out[1:])


def test_refresh_is_once_per_window(rng):
    w = World(rng)
    psd = w.psds[0]
    assert not psd.refresh_puzzles(10.0)
    assert psd.refresh_puzzles(3600.0)
    assert psd.db.block(0).validity_window == 1


# ------------------------------------------------------------------ SAS


def _service(w, theta=2, window=0, ap=0, opening=True):
    block = w.psds[0].db.block(theta)
    token = create_token(block, theta, w.key.public_bytes, w.sig, current_window=window, rng=w.rng)
    pol, com = w.pol(ap=ap)
    return token, ServiceRequest(token.to_bytes(), pol, com.digest, com.opening if opening else None)


def test_sas_grants_then_replays(rng):
    w = World(rng)
    token, req = _service(w)
    assert Token.from_bytes(token.to_bytes()) == token
    assert parse_decision(w.sas.handle(req.encode(), 0, 0)) == (True, Stage.GRANTED)
    again = ServiceRequest(req.token, w.pol(ap=1)[0], req.commitment)
    assert parse_decision(w.sas.handle(again.encode(), 0, 0)) == (False, Stage.REPLAY)


def test_sas_stage_order(rng):
    w = World(rng)
    token, req = _service(w, opening=False)
    assert parse_decision(w.sas.handle(req.encode(), 1, 0)) == (False, Stage.SIGNATURE)
    bad_sol = Token(token.theta, token.window, token.puzzles, 0, token.signature, token.solution[:-1] + bytes([token.solution[-1] ^ 1]))
    r = ServiceRequest(bad_sol.to_bytes(), req.pol, req.commitment)
    assert parse_decision(w.sas.handle(r.encode(), 0, 0)) == (False, Stage.POW)
    assert parse_decision(w.sas.handle(req.encode(), 0, 5)) == (False, Stage.POL)
    _, req2 = _service(w, theta=3)
    other = type(req2.opening)(GridCoordinate(9, 9), req2.opening.beacon_nonce, 0, req2.opening.r)
    r2 = ServiceRequest(req2.token, req2.pol, req2.commitment, other)
    assert parse_decision(w.sas.handle(r2.encode(), 0, 0)) == (False, Stage.OPENING)
    assert parse_decision(w.sas.handle(b"\x20garbage", 0, 0)) == (False, Stage.SIGNATURE)


def test_sas_purge_drops_old_windows(rng):
    w = World(rng)
    _, req = _service(w)
    w.sas.handle(req.encode(), 0, 0)
    assert w.sas.replay_log
    w.sas.purge(1)
    assert not w.sas.replay_log


def test_client_refuses_unsigned_or_stale_puzzle(rng):
    w = World(rng)
    block = w.psds[0].db.block(1)
    forged = DbEntryBlock(block.record, block.puzzles, block.validity_window, b"\x00" * len(block.issuer_sig))
    with pytest.raises(SignatureError):
        create_token(forged, 1, w.key.public_bytes, w.sig)
    with pytest.raises(SignatureError):
        create_token(block, 1, w.key.public_bytes, w.sig, current_window=4)
    with pytest.raises(SignatureError):
        create_token(block, 2, w.key.public_bytes, w.sig)


def test_token_and_request_parsing_errors(rng):
    with pytest.raises(FormatError):
        Token.from_bytes(b"\x00" * 5)
    w = World(rng)
    _, req = _service(w)
    with pytest.raises(FormatError):
        ServiceRequest.decode(req.encode() + b"\x00")
    with pytest.raises(FormatError):
        parse_decision(b"\x00")
    assert ServiceRequest.decode(req.encode()) == req


def test_lbp_tokens(rng):
    w = World(rng)
    bound = puzzle_bind(w.psds[0].db, w.key, "lbp", [12], window=0, rng=rng)
    for p in w.psds:
        p._install(bound)
    _, req = _service(w, theta=4)
    assert parse_decision(w.sas.handle(req.encode(), 0, 0)) == (True, Stage.GRANTED)
