"""Diffie-Hellman KEM over Curve25519.

The ciphertext is a fresh ephemeral public key; the shared secret is
SHA-256(dh || eph_pk || pk).
"""

from __future__ import annotations

import hashlib

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from ..errors import MalformedCiphertext, MalformedPublicKey

KEY_BYTES = 32


def _public_bytes(sk: X25519PrivateKey) -> bytes:
    return sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def keygen_from_seed(seed: bytes) -> tuple[bytes, bytes]:
    """(public, secret) from 32 seed bytes; clamping happens inside X25519."""
    sk = X25519PrivateKey.from_private_bytes(seed)
    return _public_bytes(sk), seed


def encaps_from_seed(pk: bytes, eph_seed: bytes) -> tuple[bytes, bytes]:
    if len(pk) != KEY_BYTES:
        raise MalformedPublicKey(f"X25519 public key must be 32 bytes, got {len(pk)}")
    eph = X25519PrivateKey.from_private_bytes(eph_seed)
    eph_pk = _public_bytes(eph)
    try:
        dh = eph.exchange(X25519PublicKey.from_public_bytes(pk))
    except ValueError as exc:
        # low-order peer key: the shared point is all zeros
        raise MalformedPublicKey("public key yields an all-zero shared point") from exc
    return eph_pk, hashlib.sha256(dh + eph_pk + pk).digest()


def decaps(sk: bytes, ct: bytes) -> bytes:
    if len(ct) != KEY_BYTES:
        raise MalformedCiphertext(f"X25519 ciphertext must be 32 bytes, got {len(ct)}")
    priv = X25519PrivateKey.from_private_bytes(sk)
    pk = _public_bytes(priv)
    try:
        dh = priv.exchange(X25519PublicKey.from_public_bytes(ct))
    except ValueError:
        # a low-order ciphertext cannot come from an honest peer; answer with a
        # secret the attacker cannot predict instead of signalling
        return hashlib.sha256(b"x25519-kem-reject" + sk + ct).digest()
    return hashlib.sha256(dh + ct + pk).digest()
