import numpy as np
import pytest

from privspec.crypto import AeadBackend, derive_key, kem_backend, signature_backend
from privspec.util import as_rng, pack_bits, random_below, random_bytes, unpack_bits, xor_all, xor_bytes


@pytest.mark.parametrize("name", ["stub", "ml-dsa-44"])
def test_signatures_verify_and_reject_tampering(name, rng):
    sig = signature_backend(name)
    key = sig.keygen(rng)
    s = key.sign(b"block")
    assert len(s) == sig.signature_size
    assert sig.verify(key.public_bytes, b"block", s)
    assert not sig.verify(key.public_bytes, b"blocK", s)
    assert not sig.verify(key.public_bytes, b"block", s[:-1] + bytes([s[-1] ^ 1]))
    assert not sig.verify(sig.keygen(rng).public_bytes, b"block", s)


@pytest.mark.parametrize("name", ["stub", "ml-kem-768"])
def test_kem_agreement(name, rng):
    kem = kem_backend(name)
    kp = kem.keygen(rng)
    ss, ct = kem.encapsulate(kp.public_bytes, rng)
    assert kem.decapsulate(kp, ct) == ss
    assert kem.decapsulate(kem.keygen(rng), ct) != ss


def test_unknown_backends_raise():
    with pytest.raises(ValueError):
        signature_backend("rsa")
    with pytest.raises(ValueError):
        kem_backend("dh")


def test_aead_counters_and_keys():
    aead = AeadBackend()
    key = derive_key(b"s" * 32, b"fwd")
    assert len(key) == 32 and key != derive_key(b"s" * 32, b"bwd")
    ct = aead.seal(key, 0, 7, b"payload", b"hdr")
    assert aead.open(key, 0, 7, ct, b"hdr") == b"payload"
    assert aead.open(key, 0, 8, ct, b"hdr") is None
    assert aead.open(key, 1, 7, ct, b"hdr") is None
    assert aead.open(bytes(32), 0, 7, ct, b"hdr") is None
    assert aead.seal_calls == 1 and aead.open_calls == 4


def test_util_helpers():
    g = as_rng(5)
    assert as_rng(g) is g
    assert len(random_bytes(9)) == 9 and random_bytes(4, as_rng(1)) == random_bytes(4, as_rng(1))
    assert all(0 <= random_below(3**50, g) < 3**50 for _ in range(20))
    with pytest.raises(ValueError):
        random_below(0)
    bits = np.array([1, 0, 1, 1, 0, 0, 0, 1, 1], dtype=np.uint8)
    assert list(unpack_bits(pack_bits(bits), 9)) == list(bits)
    assert xor_bytes(b"\x0f", b"\xff") == b"\xf0"
    assert xor_all([b"\x01", b"\x02", b"\x04"]) == b"\x07"
    with pytest.raises(ValueError):
        xor_bytes(b"a", b"ab")
