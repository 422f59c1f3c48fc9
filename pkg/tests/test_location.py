import math

import pytest

from privspec.errors import InputError, MembershipError, ParameterError, ProximityError, StaleBeaconError
from privspec.location import (
    AccessPoint,
    IdealAttestor,
    Opening,
    ProofOfLocation,
    RingContext,
    Statement,
    Witness,
    beacon_window,
    commit_location,
    derive_event_id,
    lrs_keygen,
    lrs_link,
    open_verify,
    pol_request,
    pol_verify,
    prox_verif,
    rss_at,
    rtt_at,
)
from privspec.spectrum_db import GridCoordinate


@pytest.fixture
def setup(rng):
    keys = [lrs_keygen(rng) for _ in range(4)]
    ring = RingContext([pk for _, pk in keys])
    sok = IdealAttestor(b"\x07" * 32)
    aps = [AccessPoint(i, sk, ring, sok) for i, (sk, _) in enumerate(keys)]
    return keys, ring, sok, aps


def _pol(ap, window, rng, distance=10.0):
    req, com = pol_request(GridCoordinate(2, 3), ap.broadcast(window), rss_at(distance), rtt_at(distance), rng)
    return ap.pol_respond(req), com


def test_proximity_inverts_forward_model():
    for d in (1.0, 10.0, 49.0, 300.0):
        assert math.isclose(prox_verif(rss_at(d), rtt_at(d)), d, rel_tol=1e-9)
    with pytest.raises(InputError):
        prox_verif(float("nan"), 0.0)
    with pytest.raises(InputError):
        prox_verif(-60.0, -1.0)
    with pytest.raises(InputError):
        prox_verif(-60.0, 1e-7, n_pl=0)


def test_ring_requires_power_of_two(rng):
    with pytest.raises(ParameterError):
        RingContext([lrs_keygen(rng)[1] for _ in range(3)])


def test_merkle_paths_reach_root(setup):
    keys, ring, _, _ = setup
    for i, (_, pk) in enumerate(keys):
        assert ring.index_of(pk) == i
        assert ring.path(i).root_from(pk) == ring.root
    with pytest.raises(MembershipError):
        ring.index_of(b"\x00" * 32)


def test_commitment_binding(rng):
    keys = lrs_keygen(rng)
    ring = RingContext([keys[1], lrs_keygen(rng)[1]])
    ap = AccessPoint(0, keys[0], ring, IdealAttestor())
    com = commit_location(GridCoordinate(4, 5), ap.broadcast(3), rng)
    assert open_verify(com.digest, com.opening)
    assert Opening.decode(com.opening.encode()) == com.opening
    moved = Opening(GridCoordinate(4, 6), com.opening.beacon_nonce, 3, com.opening.r)
    assert not open_verify(com.digest, moved)


def test_pol_is_196_bytes_and_roundtrips(setup, rng):
    _, ring, sok, aps = setup
    pol, _ = _pol(aps[1], 5, rng)
    data = pol.to_bytes()
    assert len(data) == 196
    assert ProofOfLocation.from_bytes(data) == pol
    assert pol_verify(pol, ring, 5, sok)
    assert not pol_verify(pol, ring, 6, sok)


def test_pol_rejected_under_other_ring_or_attestor(setup, rng):
    _, ring, sok, aps = setup
    pol, _ = _pol(aps[0], 1, rng)
    other = RingContext([lrs_keygen(rng)[1] for _ in range(4)])
    assert not pol_verify(pol, other, 1, sok)
    assert not pol_verify(pol, ring, 1, IdealAttestor(b"\x08" * 32))


def test_linkability_per_signer_and_window(setup, rng):
    _, _, _, aps = setup
    a1, _ = _pol(aps[0], 1, rng)
    a2, _ = _pol(aps[0], 1, rng)
    b1, _ = _pol(aps[1], 1, rng)
    a3, _ = _pol(aps[0], 2, rng)
    assert a1.commitment != a2.commitment
    assert lrs_link(a1.event_id, a1, a2)
    assert not lrs_link(a1.event_id, a1, b1)
    assert not lrs_link(a1.event_id, a1, a3)


def test_event_id_depends_on_window(rng):
    sk = lrs_keygen(rng)[0]
    assert derive_event_id(sk, b"n" * 8, 1) != derive_event_id(sk, b"n" * 8, 2)


def test_ap_refuses_stale_and_far(setup, rng):
    _, _, _, aps = setup
    ap = aps[2]
    old = ap.broadcast(1)
    ap.broadcast(2)
    req, _ = pol_request(GridCoordinate(0, 0), old, rss_at(5), rtt_at(5), rng)
    with pytest.raises(StaleBeaconError):
        ap.pol_respond(req)
    req, _ = pol_request(GridCoordinate(0, 0), ap.beacon, rss_at(80), rtt_at(80), rng)
    with pytest.raises(ProximityError):
        ap.pol_respond(req)
    assert ap.proximity_checks == 1


def test_attestor_refuses_bad_witness(setup, rng):
    keys, ring, sok, _ = setup
    sk = keys[0][0]
    st = Statement(ring.root, b"e" * 32, b"t" * 32, b"m")
    with pytest.raises(MembershipError):
        sok.prove(st, Witness(sk, ring.path(0)))


def test_beacon_window():
    assert beacon_window(0) == 0
    assert beacon_window(119.9, 60) == 1
