"""EAX authenticated encryption over AES.

The block cipher itself comes from ``cryptography``; OMAC (CMAC), the
counter-mode keystream and the EAX composition are implemented here.
Bulk work is pushed into single ECB/CBC calls so that multi-megabyte
payloads stay fast:

* CTR: all counter blocks are built with numpy and encrypted in one ECB call.
* OMAC: CMAC is CBC-MAC over the subkey-masked message, so the tag is the
  last block of one CBC encryption with a zero IV.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import InvalidCiphertext

BLOCK = 16
_MASK128 = (1 << 128) - 1
_ZERO_IV = bytes(BLOCK)


def _double(block: bytes) -> bytes:
    """Multiply by x in GF(2^128), reduction polynomial x^128+x^7+x^2+x+1."""
    v = int.from_bytes(block, "big") << 1
    if v >> 128:
        v = (v & _MASK128) ^ 0x87
    return v.to_bytes(BLOCK, "big")


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


@dataclass(frozen=True)
class EaxKey:
    """An AES-128 or AES-256 key with its OMAC subkeys precomputed."""

    key_bytes: bytes
    _b: bytes = field(init=False, repr=False, compare=False)
    _p: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.key_bytes, (bytes, bytearray)):
            raise TypeError("key must be bytes")
        if len(self.key_bytes) not in (16, 32):
            raise ValueError(f"AES key must be 16 or 32 bytes, got {len(self.key_bytes)}")
        object.__setattr__(self, "key_bytes", bytes(self.key_bytes))
        ell = self.ecb(_ZERO_IV)
        b = _double(ell)
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_p", _double(b))

    def __repr__(self):
        return f"EaxKey(<{len(self.key_bytes) * 8}-bit>)"

    def ecb(self, data: bytes) -> bytes:
        enc = Cipher(algorithms.AES(self.key_bytes), modes.ECB()).encryptor()
        return enc.update(data) + enc.finalize()

    def cbc_last_block(self, data: bytes) -> bytes:
        enc = Cipher(algorithms.AES(self.key_bytes), modes.CBC(_ZERO_IV)).encryptor()
        out = enc.update(data) + enc.finalize()
        return out[-BLOCK:]


def as_key(key: EaxKey | bytes) -> EaxKey:
    return key if isinstance(key, EaxKey) else EaxKey(bytes(key))


def cmac(key: EaxKey | bytes, msg: bytes) -> bytes:
    """Plain CMAC (OMAC1) of ``msg``."""
    key = as_key(key)
    if msg and len(msg) % BLOCK == 0:
        last = _xor(msg[-BLOCK:], key._b)
        data = msg[:-BLOCK] + last
    else:
        full = len(msg) - len(msg) % BLOCK
        tail = msg[full:] + b"\x80"
        tail = tail + bytes(BLOCK - len(tail))
        data = msg[:full] + _xor(tail, key._p)
    return key.cbc_last_block(data)


def omac_t(key: EaxKey | bytes, tweak: int, msg: bytes) -> bytes:
    """Tweaked OMAC: CMAC over the 16-byte big-endian tweak block followed by ``msg``."""
    if tweak not in (0, 1, 2):
        raise ValueError("tweak must be 0, 1 or 2")
    return cmac(key, tweak.to_bytes(BLOCK, "big") + bytes(msg))


def _counter_blocks(initial: bytes, n: int) -> bytes:
    start = int.from_bytes(initial, "big")
    hi0 = np.uint64(start >> 64)
    lo0 = np.uint64(start & 0xFFFFFFFFFFFFFFFF)
    steps = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        lo = lo0 + steps
        # a carry happened exactly where the low word wrapped below its start
        hi = hi0 + (lo < lo0).astype(np.uint64)
    blocks = np.empty((n, 2), dtype=">u8")
    blocks[:, 0] = hi
    blocks[:, 1] = lo
    return blocks.tobytes()


def ctr_keystream(key: EaxKey | bytes, initial_counter: bytes, data: bytes) -> bytes:
    """XOR ``data`` with the AES-CTR keystream starting at ``initial_counter``.

    The whole 128-bit block is the counter (big-endian, wrapping at 2^128).
    Applying the function twice returns the input.
    """
    if len(initial_counter) != BLOCK:
        raise ValueError("initial counter must be 16 bytes")
    if not data:
        return b""
    key = as_key(key)
    nblocks = -(-len(data) // BLOCK)
    stream = key.ecb(_counter_blocks(initial_counter, nblocks))
    out = np.bitwise_xor(
        np.frombuffer(data, dtype=np.uint8),
        np.frombuffer(stream, dtype=np.uint8, count=len(data)),
    )
    return out.tobytes()


def _check_tau(tau: int) -> int:
    if tau % 8 or not 0 < tau <= 128:
        raise ValueError(f"tag length must be a multiple of 8 in (0, 128], got {tau}")
    return tau // 8


def eax_encrypt(key: EaxKey | bytes, nonce: bytes, header: bytes, message: bytes, tau: int = 128) -> bytes:
    """Return C || T for the given nonce, header and message."""
    tlen = _check_tau(tau)
    if len(nonce) < 1:
        raise ValueError("nonce must be at least one byte")
    key = as_key(key)
    n = omac_t(key, 0, nonce)
    h = omac_t(key, 1, header)
    c = ctr_keystream(key, n, message)
    cc = omac_t(key, 2, c)
    tag = _xor(_xor(n, cc), h)
    return c + tag[:tlen]


def eax_decrypt(key: EaxKey | bytes, nonce: bytes, header: bytes, ct: bytes, tau: int = 128) -> bytes:
    """Verify and decrypt C || T. Raises InvalidCiphertext on any mismatch."""
    tlen = _check_tau(tau)
    if len(ct) < tlen:
        raise InvalidCiphertext("ciphertext shorter than tag")
    if len(nonce) < 1:
        raise InvalidCiphertext("empty nonce")
    key = as_key(key)
    c, t = ct[: len(ct) - tlen], ct[len(ct) - tlen :]
    n = omac_t(key, 0, nonce)
    h = omac_t(key, 1, header)
    cc = omac_t(key, 2, c)
    expected = _xor(_xor(n, cc), h)[:tlen]
    if not hmac.compare_digest(expected, t):
        raise InvalidCiphertext("tag mismatch")
    return ctr_keystream(key, n, c)


def read_vectors(path) -> list[tuple[bytes, bytes, bytes, bytes, bytes]]:
    """Parse a KEY,NONCE,HEADER,MSG,CIPHER hex file (one vector per line, '#' comments)."""
    out = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 5:
                raise ValueError(f"expected 5 fields, got {len(fields)}: {line!r}")
            out.append(tuple(bytes.fromhex(f) for f in fields))
    return out
