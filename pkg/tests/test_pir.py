import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_db
from oracles import field_matvec, xor_rows
from privspec.errors import (
    BackpressureError,
    FormatError,
    GeometryError,
    IncompletenessError,
    ParameterError,
    RobustnessError,
    SessionError,
)
from privspec.pir import (
    DEFAULT_MODULUS,
    PirFrame,
    decode_bits,
    decode_field,
    encode_bits,
    encode_field,
    ens_query_gen,
    ens_reconstruct,
    ens_respond,
    ens_share,
    expand_mask,
    ftr_query_gen,
    ftr_reconstruct,
    ftr_respond,
    oop_offline_handshake,
    oop_preprocess,
    oop_query_gen,
    oop_reconstruct,
    oop_refill,
    oop_respond,
    unique_radius,
    zero_prg,
)
from privspec.spectrum_db import Scheme


# ------------------------------------------------------------------ ENS


def test_ens_shares_xor_to_unit_vector(rng):
    q = ens_query_gen(5, 17, 4, rng)
    assert q.n_servers == 4
    total = np.bitwise_xor.reduce(q.shares, axis=0)
    assert total.tolist() == [int(i == 5) for i in range(17)]


def test_ens_respond_matches_oracle(rng):
    db = random_db(40, 24, rng)
    rows = [db.row(i) for i in range(40)]
    for _ in range(20):
        share = rng.integers(0, 2, size=40, dtype=np.uint8)
        assert ens_respond(share, db) == xor_rows(rows, share)
    assert ens_respond(np.zeros(40, dtype=np.uint8), db) == bytes(24)


def test_ens_errors(rng):
    db = random_db(8, 8, rng)
    with pytest.raises(ParameterError):
        ens_query_gen(0, 8, 1, rng)
    with pytest.raises(ParameterError):
        ens_query_gen(8, 8, 2, rng)
    with pytest.raises(GeometryError):
        ens_respond(np.zeros(7, dtype=np.uint8), db)
    with pytest.raises(IncompletenessError):
        ens_reconstruct([bytes(8), None])
    with pytest.raises(IncompletenessError):
        ens_reconstruct([bytes(8)], n_servers=2)
    with pytest.raises(ParameterError):
        ens_share(3, np.zeros(3, dtype=np.uint8))


def test_ens_single_server_view_is_uniform():
    """Every share of every theta is uniform over {0,1}^r (r=3, l=3, exhaustive)."""
    r, ell = 3, 3
    for theta in range(r):
        for i in range(ell):
            seen = {}
            for bits in itertools.product((0, 1), repeat=r * (ell - 1)):
                s = tuple(ens_share(theta, np.array(bits, dtype=np.uint8).reshape(ell - 1, r))[i].tolist())
                seen[s] = seen.get(s, 0) + 1
            assert len(seen) == 2 ** r and len(set(seen.values())) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(2, 6), st.data())
def test_ens_roundtrip_property(r, ell, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    db = random_db(r, 16, rng)
    theta = data.draw(st.integers(0, r - 1))
    q = ens_query_gen(theta, r, ell, rng)
    assert ens_reconstruct([ens_respond(s, db) for s in q.shares]) == db.row(theta)


# ------------------------------------------------------------------ FTR


def test_ftr_respond_matches_oracle(rng):
    db = random_db(12, 8, rng)
    rows = [list(db.payload[i]) for i in range(12)]
    for _ in range(10):
        q = rng.integers(0, DEFAULT_MODULUS, size=12, dtype=np.uint32)
        assert ftr_respond(q, db).tolist() == field_matvec(q, rows, DEFAULT_MODULUS)


def test_ftr_t_servers_see_uniform_shares(rng):
    """With t=1, one server's coordinate at theta is uniform (chi-square on a small field)."""
    p = 17
    counts = np.zeros(p, dtype=int)
    for _ in range(3400):
        q = ftr_query_gen(2, 4, 3, 1, p, rng)
        counts[q.vectors[0][2]] += 1
    expected = 3400 / p
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 40  # 16 dof, p < 0.001


def test_ftr_exact_with_all_honest(rng):
    db = random_db(20, 32, rng)
    q = ftr_query_gen(7, 20, 4, 2, rng=rng)
    assert ftr_reconstruct([ftr_respond(v, db) for v in q.vectors], 2) == db.row(7)


def test_ftr_missing_answers(rng):
    db = random_db(10, 8, rng)
    q = ftr_query_gen(3, 10, 5, 2, rng=rng)
    ans = [ftr_respond(v, db) for v in q.vectors]
    assert ftr_reconstruct({0: ans[0], 2: ans[2], 4: ans[4]}, 2) == db.row(3)
    with pytest.raises(IncompletenessError):
        ftr_reconstruct({0: ans[0], 1: ans[1]}, 2)


def test_ftr_beyond_radius_raises(rng):
    db = random_db(6, 8, rng)
    q = ftr_query_gen(1, 6, 5, 1, rng=rng)
    ans = [ftr_respond(v, db).astype(np.int64) for v in q.vectors]
    assert unique_radius(5, 1) == 1
    for i in (1, 3):
        ans[i] = (ans[i] + 1) % DEFAULT_MODULUS
    with pytest.raises(RobustnessError):
        ftr_reconstruct(ans, 1)


def test_ftr_inconsistent_with_no_budget(rng):
    db = random_db(6, 8, rng)
    q = ftr_query_gen(1, 6, 3, 1, rng=rng)
    ans = [ftr_respond(v, db).astype(np.int64) for v in q.vectors]
    ans[2] = (ans[2] + 5) % DEFAULT_MODULUS
    with pytest.raises(RobustnessError):
        ftr_reconstruct(ans, 1)


def test_ftr_names_suspect(rng):
    db = random_db(6, 64, rng)
    q = ftr_query_gen(4, 6, 7, 1, rng=rng)
    ans = [ftr_respond(v, db).astype(np.int64) for v in q.vectors]
    for i in (0, 5, 6):
        ans[i][:4] = (ans[i][:4] + 3) % DEFAULT_MODULUS
    ans[5][4:8] = (ans[5][4:8] + 3) % DEFAULT_MODULUS  # these words stay decodable
    with pytest.raises(RobustnessError) as exc:
        ftr_reconstruct(ans, 1)
    assert 5 in exc.value.suspects


def test_ftr_parameter_checks(rng):
    with pytest.raises(ParameterError):
        ftr_query_gen(0, 4, 3, 3, rng=rng)
    with pytest.raises(ParameterError):
        ftr_query_gen(0, 4, 3, 1, modulus=3, rng=rng)


# ------------------------------------------------------------------ OOP


def _oop_run(st_, theta, prg=None):
    sess = [oop_offline_handshake(st_, i) for i in range(st_.n_chunks)]
    kw = {} if prg is None else {"prg": prg}
    subs = oop_query_gen(theta, [s for _, s in sess], st_.layouts, st_.db.rows, **kw)
    return oop_reconstruct([oop_respond(st_, i, sid, q) for i, ((sid, _), q) in enumerate(zip(sess, subs))]), subs


@pytest.mark.parametrize("n,t", [(2, 2), (3, 3), (4, 2), (4, 1)])
def test_oop_roundtrip(rng, n, t):
    db = random_db(8 * n, 16, rng)
    state = oop_preprocess(db, n, t, 8 * n, rng)
    for theta in range(db.rows):
        got, subs = _oop_run(state, theta)
        assert got == db.row(theta)
        assert all(len(s) == db.rows // n for s in subs)


def test_oop_online_work_is_one_chunk(rng):
    db = random_db(64, 16, rng)
    state = oop_preprocess(db, 4, None, 2, rng)
    _oop_run(state, 10)
    assert state.rows_touched == [16] * 4


def test_oop_zero_prg_degenerates_to_plain_lookup(rng):
    db = random_db(12, 16, rng)
    state = oop_preprocess(db, 3, None, 1, rng, prg=zero_prg)
    got, subs = _oop_run(state, 7, prg=zero_prg)
    assert got == db.row(7)
    flat = np.concatenate(subs)
    assert flat.tolist() == [int(i == 7) for i in range(12)]


def test_oop_session_single_use(rng):
    db = random_db(8, 16, rng)
    state = oop_preprocess(db, 2, None, 2, rng)
    sid, seed = oop_offline_handshake(state, 0)
    q = np.zeros(4, dtype=np.uint8)
    oop_respond(state, 0, sid, q)
    with pytest.raises(SessionError):
        oop_respond(state, 0, sid, q)
    with pytest.raises(GeometryError):
        oop_respond(state, 0, oop_offline_handshake(state, 0)[0], np.zeros(5, dtype=np.uint8))


def test_oop_backpressure_and_refill(rng):
    db = random_db(8, 16, rng)
    state = oop_preprocess(db, 2, None, 1, rng)
    oop_offline_handshake(state, 1)
    with pytest.raises(BackpressureError):
        oop_offline_handshake(state, 1)
    oop_refill(state, 1, 3, rng)
    assert len(state.queues[1]) == 3


def test_oop_preprocess_validation(rng):
    db = random_db(10, 16, rng)
    with pytest.raises(GeometryError):
        oop_preprocess(db, 3)
    with pytest.raises(ParameterError):
        oop_preprocess(db, 2, 3)
    with pytest.raises(ParameterError):
        oop_preprocess(db, 2, 2, layouts=[(1, 0), (0, 1)])
    with pytest.raises(IncompletenessError):
        oop_reconstruct([bytes(16), None])


def test_oop_mask_covers_only_non_flip_chunks():
    m = expand_mask(b"s" * 16, (2, 0), 12, 3)
    assert not m[8:12].any() and not m[4:8].any()


# ------------------------------------------------------------------ wire


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=300))
def test_bits_roundtrip(bits):
    assert decode_bits(encode_bits(bits), len(bits)).tolist() == bits


def test_field_roundtrip_and_frame():
    v = np.array([0, 1, 65536, 123], dtype=np.uint32)
    assert decode_field(encode_field(v)).tolist() == v.tolist()
    with pytest.raises(FormatError):
        decode_field(b"\x00" * 3)
    frame = PirFrame(Scheme.FTR, 3, encode_field(v))
    assert PirFrame.decode(frame.encode()) == frame
    with pytest.raises(FormatError):
        PirFrame.decode(frame.encode()[:-1])
    with pytest.raises(FormatError):
        PirFrame.decode(b"\x09" + frame.encode()[1:])
    with pytest.raises(FormatError):
        decode_bits(b"\x00", 9)
