"""Pluggable post-quantum signature, KEM and AEAD backends.

Production bindings are ML-DSA-44 and ML-KEM-768 from ``cryptography``.
The stub backends are deterministic given a seeded generator, which the
simulator relies on for reproducible transcripts. They are classical
(Ed25519 / X25519) and keep the production wire sizes where layouts
depend on them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import mldsa, mlkem
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .util import random_bytes

MLDSA44_SIGNATURE_BYTES = 2420

_RAW = serialization.Encoding.Raw, serialization.PublicFormat.Raw


@dataclass(frozen=True)
class SigningKey:
    backend: "SignatureBackend"
    public_bytes: bytes
    _private: object = field(repr=False)

    def sign(self, message: bytes) -> bytes:
        return self.backend._sign(self._private, message)


class SignatureBackend:
    name = "abstract"
    signature_size = 0

    def keygen(self, rng=None) -> SigningKey:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError

    def _sign(self, private, message: bytes) -> bytes:
        raise NotImplementedError


class MLDSABackend(SignatureBackend):
    """ML-DSA-44; signatures are 2420 bytes and randomized (hedged)."""

    name = "ml-dsa-44"
    signature_size = MLDSA44_SIGNATURE_BYTES

    def keygen(self, rng=None) -> SigningKey:
        sk = mldsa.MLDSA44PrivateKey.from_seed_bytes(random_bytes(32, rng))
        return SigningKey(self, sk.public_key().public_bytes_raw(), sk)

    def _sign(self, private, message: bytes) -> bytes:
        return private.sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            mldsa.MLDSA44PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class StubSignatureBackend(SignatureBackend):
    """Deterministic Ed25519 signatures zero-padded to the ML-DSA-44 size."""

    name = "stub"
    signature_size = MLDSA44_SIGNATURE_BYTES

    def keygen(self, rng=None) -> SigningKey:
        sk = Ed25519PrivateKey.from_private_bytes(random_bytes(32, rng))
        return SigningKey(self, sk.public_key().public_bytes(*_RAW), sk)

    def _sign(self, private, message: bytes) -> bytes:
        sig = private.sign(message)
        return sig + bytes(self.signature_size - len(sig))

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if len(signature) != self.signature_size or any(signature[64:]):
            return False
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature[:64], message)
        except (InvalidSignature, ValueError):
            return False
        return True


def signature_backend(name: str) -> SignatureBackend:
    if name in ("stub", "ed25519"):
        return StubSignatureBackend()
    if name in ("ml-dsa", "ml-dsa-44", "pq", "mldsa"):
        return MLDSABackend()
    raise ValueError(f"unknown signature backend {name!r}")


# --------------------------------------------------------------------- KEM


@dataclass(frozen=True)
class KemKeypair:
    public_bytes: bytes
    _private: object = field(repr=False)


class KemBackend:
    name = "abstract"

    def keygen(self, rng=None) -> KemKeypair:
        raise NotImplementedError

    def encapsulate(self, public_key: bytes, rng=None) -> tuple[bytes, bytes]:
        """Return ``(shared_secret, ciphertext)``."""
        raise NotImplementedError

    def decapsulate(self, keypair: KemKeypair, ciphertext: bytes) -> bytes:
        raise NotImplementedError


class MLKEMBackend(KemBackend):
    """ML-KEM-768. Encapsulation randomness comes from the OS."""

    name = "ml-kem-768"

    def keygen(self, rng=None) -> KemKeypair:
        sk = mlkem.MLKEM768PrivateKey.from_seed_bytes(random_bytes(64, rng))
        return KemKeypair(sk.public_key().public_bytes_raw(), sk)

    def encapsulate(self, public_key: bytes, rng=None) -> tuple[bytes, bytes]:
        return mlkem.MLKEM768PublicKey.from_public_bytes(public_key).encapsulate()

    def decapsulate(self, keypair: KemKeypair, ciphertext: bytes) -> bytes:
        return keypair._private.decapsulate(ciphertext)


class StubKemBackend(KemBackend):
    """X25519 ephemeral-static KEM, deterministic under a seeded generator."""

    name = "stub"

    def keygen(self, rng=None) -> KemKeypair:
        sk = X25519PrivateKey.from_private_bytes(random_bytes(32, rng))
        return KemKeypair(sk.public_key().public_bytes(*_RAW), sk)

    def encapsulate(self, public_key: bytes, rng=None) -> tuple[bytes, bytes]:
        eph = X25519PrivateKey.from_private_bytes(random_bytes(32, rng))
        ct = eph.public_key().public_bytes(*_RAW)
        shared = eph.exchange(X25519PublicKey.from_public_bytes(public_key))
        return _stub_ss(shared, ct, public_key), ct

    def decapsulate(self, keypair: KemKeypair, ciphertext: bytes) -> bytes:
        shared = keypair._private.exchange(X25519PublicKey.from_public_bytes(ciphertext))
        return _stub_ss(shared, ciphertext, keypair.public_bytes)


def _stub_ss(shared: bytes, ct: bytes, pk: bytes) -> bytes:
    return hashlib.sha3_256(b"stub-kem" + shared + ct + pk).digest()


def kem_backend(name: str) -> KemBackend:
    if name in ("stub", "x25519"):
        return StubKemBackend()
    if name in ("ml-kem", "ml-kem-768", "pq", "mlkem"):
        return MLKEMBackend()
    raise ValueError(f"unknown KEM backend {name!r}")


def derive_key(shared_secret: bytes, info: bytes, length: int = 32) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=length, salt=None, info=info).derive(shared_secret)


# -------------------------------------------------------------------- AEAD


class AeadBackend:
    """AES-256-GCM with counter nonces; counts seal/open calls."""

    name = "aes-256-gcm"
    tag_size = 16

    def __init__(self) -> None:
        self.seal_calls = 0
        self.open_calls = 0

    @staticmethod
    def nonce(direction: int, counter: int) -> bytes:
        return bytes([direction]) + bytes(3) + counter.to_bytes(8, "big")

    def seal(self, key: bytes, direction: int, counter: int, plaintext: bytes, aad: bytes = b"") -> bytes:
        self.seal_calls += 1
        return AESGCM(key).encrypt(self.nonce(direction, counter), plaintext, aad)

    def open(self, key: bytes, direction: int, counter: int, ciphertext: bytes, aad: bytes = b"") -> bytes | None:
        self.open_calls += 1
        try:
            return AESGCM(key).decrypt(self.nonce(direction, counter), ciphertext, aad)
        except InvalidTag:
            return None
