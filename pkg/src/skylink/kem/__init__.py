"""Key encapsulation with two interchangeable schemes.

``rng`` arguments accept anything with a ``randbytes(n)`` method, e.g.
``random.Random(seed)`` for reproducible runs. When omitted, the OS
CSPRNG is used.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from ..errors import MalformedCiphertext, MalformedPublicKey
from . import mlkem, x25519kem

__all__ = [
    "KemScheme",
    "KemKeyPair",
    "kem_keygen",
    "kem_encapsulate",
    "kem_decapsulate",
    "public_key_len",
    "ciphertext_len",
]

_SYSTEM_RNG = random.SystemRandom()


class KemScheme(enum.IntEnum):
    ECDH_KEM = 0x01
    ML_KEM_512 = 0x02

    @property
    def label(self) -> str:
        return {KemScheme.ECDH_KEM: "ecdh", KemScheme.ML_KEM_512: "ml-kem-512"}[self]

    @classmethod
    def parse(cls, value) -> KemScheme:
        """Accept an enum, a wire id, or a CLI label such as 'ecdh' / 'ml-kem-512'."""
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        text = str(value).strip().lower().replace("_", "-")
        aliases = {
            "ecdh": cls.ECDH_KEM,
            "ecc": cls.ECDH_KEM,
            "ecdh-kem": cls.ECDH_KEM,
            "x25519": cls.ECDH_KEM,
            "ml-kem-512": cls.ML_KEM_512,
            "mlkem512": cls.ML_KEM_512,
            "kyber": cls.ML_KEM_512,
            "kyber512": cls.ML_KEM_512,
        }
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown KEM scheme {value!r}") from None


_PK_LEN = {KemScheme.ECDH_KEM: 32, KemScheme.ML_KEM_512: mlkem.PUBLIC_KEY_BYTES}
_SK_LEN = {KemScheme.ECDH_KEM: 32, KemScheme.ML_KEM_512: mlkem.SECRET_KEY_BYTES}
_CT_LEN = {KemScheme.ECDH_KEM: 32, KemScheme.ML_KEM_512: mlkem.CIPHERTEXT_BYTES}


def public_key_len(scheme) -> int:
    return _PK_LEN[KemScheme.parse(scheme)]


def ciphertext_len(scheme) -> int:
    return _CT_LEN[KemScheme.parse(scheme)]


@dataclass(frozen=True)
class KemKeyPair:
    scheme: KemScheme
    public_key: bytes
    secret_key: bytes

    def __post_init__(self):
        if len(self.public_key) != _PK_LEN[self.scheme] or len(self.secret_key) != _SK_LEN[self.scheme]:
            raise ValueError(f"key lengths do not match {self.scheme.name}")

    def __repr__(self):
        return f"KemKeyPair({self.scheme.name}, pk={self.public_key[:8].hex()}...)"


def kem_keygen(scheme, rng=None) -> KemKeyPair:
    scheme = KemScheme.parse(scheme)
    rng = rng or _SYSTEM_RNG
    if scheme is KemScheme.ECDH_KEM:
        pk, sk = x25519kem.keygen_from_seed(rng.randbytes(32))
    else:
        d = rng.randbytes(32)
        z = rng.randbytes(32)
        pk, sk = mlkem.keygen_internal(d, z)
    return KemKeyPair(scheme, pk, sk)


def kem_encapsulate(scheme, public_key: bytes, rng=None) -> tuple[bytes, bytes]:
    """Return (ciphertext, 32-byte shared secret)."""
    scheme = KemScheme.parse(scheme)
    rng = rng or _SYSTEM_RNG
    if len(public_key) != _PK_LEN[scheme]:
        raise MalformedPublicKey(
            f"{scheme.name} public key must be {_PK_LEN[scheme]} bytes, got {len(public_key)}"
        )
    if scheme is KemScheme.ECDH_KEM:
        return x25519kem.encaps_from_seed(public_key, rng.randbytes(32))
    return mlkem.encaps_internal(public_key, rng.randbytes(32))


def kem_decapsulate(scheme, secret_key: bytes, ciphertext: bytes) -> bytes:
    scheme = KemScheme.parse(scheme)
    if len(ciphertext) != _CT_LEN[scheme]:
        raise MalformedCiphertext(
            f"{scheme.name} ciphertext must be {_CT_LEN[scheme]} bytes, got {len(ciphertext)}"
        )
    if scheme is KemScheme.ECDH_KEM:
        return x25519kem.decaps(secret_key, ciphertext)
    return mlkem.decaps(secret_key, ciphertext)
