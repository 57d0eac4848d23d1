"""ML-KEM-512 (FIPS 203) implemented with numpy.

Polynomials are int64 arrays whose last axis has 256 coefficients in
[0, q). All transforms broadcast over leading axes, so a module vector
of k polynomials is simply a ``(k, 256)`` array.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import MalformedCiphertext, MalformedPublicKey

N = 256
Q = 3329
K = 2
ETA1 = 3
ETA2 = 2
DU = 10
DV = 4

PUBLIC_KEY_BYTES = 384 * K + 32  # 800
SECRET_KEY_BYTES = 768 * K + 96  # 1632
CIPHERTEXT_BYTES = 32 * (DU * K + DV)  # 768
SHARED_SECRET_BYTES = 32


def _bitrev7(i: int) -> int:
    return int(f"{i:07b}"[::-1], 2)


ZETAS = np.array([pow(17, _bitrev7(i), Q) for i in range(128)], dtype=np.int64)
GAMMAS = np.array([pow(17, 2 * _bitrev7(i) + 1, Q) for i in range(128)], dtype=np.int64)
N_INV = pow(128, -1, Q)  # 3303


# -- NTT ---------------------------------------------------------------------

def ntt_forward(f) -> np.ndarray:
    """Negacyclic NTT over Z_q in the standard's bit-reversed zeta order."""
    f = np.array(f, dtype=np.int64)
    lead = f.shape[:-1]
    length = 128
    while length >= 2:
        groups = N // (2 * length)
        z = ZETAS[groups : 2 * groups].reshape(groups, 1)
        v = f.reshape(*lead, groups, 2, length)
        t = (z * v[..., 1, :]) % Q
        lo = (v[..., 0, :] + t) % Q
        hi = (v[..., 0, :] - t) % Q
        f = np.stack([lo, hi], axis=-2).reshape(*lead, N)
        length //= 2
    return f


def ntt_inverse(f) -> np.ndarray:
    f = np.array(f, dtype=np.int64)
    lead = f.shape[:-1]
    length = 2
    while length <= 128:
        groups = N // (2 * length)
        z = ZETAS[groups : 2 * groups][::-1].reshape(groups, 1)
        v = f.reshape(*lead, groups, 2, length)
        a, b = v[..., 0, :], v[..., 1, :]
        lo = (a + b) % Q
        hi = (z * (b - a)) % Q
        f = np.stack([lo, hi], axis=-2).reshape(*lead, N)
        length *= 2
    return (f * N_INV) % Q


def ntt_multiply(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pointwise product in the NTT domain (128 degree-one base multiplications)."""
    a0, a1 = f[..., 0::2], f[..., 1::2]
    b0, b1 = g[..., 0::2], g[..., 1::2]
    c0 = (a0 * b0 + (a1 * b1 % Q) * GAMMAS) % Q
    c1 = (a0 * b1 + a1 * b0) % Q
    out = np.empty(np.broadcast_shapes(f.shape, g.shape), dtype=np.int64)
    out[..., 0::2] = c0
    out[..., 1::2] = c1
    return out


@dataclass(frozen=True)
class PolyVec:
    """k polynomials plus an explicit record of which domain they live in."""

    coeffs: np.ndarray
    ntt: bool = False

    def to_ntt(self) -> PolyVec:
        if self.ntt:
            raise ValueError("already in NTT domain")
        return PolyVec(ntt_forward(self.coeffs), True)

    def from_ntt(self) -> PolyVec:
        if not self.ntt:
            raise ValueError("not in NTT domain")
        return PolyVec(ntt_inverse(self.coeffs), False)

    def dot(self, other: PolyVec) -> np.ndarray:
        """Inner product of two NTT-domain vectors; returns one NTT-domain polynomial."""
        if not (self.ntt and other.ntt):
            raise ValueError("inner product requires NTT-domain operands")
        return ntt_multiply(self.coeffs, other.coeffs).sum(axis=0) % Q


# -- compression and serialisation ------------------------------------------

def compress_coeff(x, d: int):
    """round(2^d * x / q) mod 2^d with ties rounding up."""
    return (((x << (d + 1)) + Q) // (2 * Q)) % (1 << d)


def decompress_coeff(y, d: int):
    return (y * Q + (1 << (d - 1))) >> d


def byte_encode(f: np.ndarray, d: int) -> bytes:
    bits = (f[..., None] >> np.arange(d)) & 1
    return np.packbits(bits.astype(np.uint8).reshape(-1), bitorder="little").tobytes()


def byte_decode(data: bytes, d: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    vals = (bits.reshape(-1, d).astype(np.int64) << np.arange(d)).sum(axis=1)
    if d == 12:
        vals %= Q
    return vals.reshape(-1, N)


# -- sampling ------------------------------------------------------------------

def sample_cbd(stream: bytes, eta: int) -> np.ndarray:
    """Centered binomial sample from 64*eta bytes; coefficients in [-eta, eta] mod q."""
    if len(stream) != 64 * eta:
        raise ValueError(f"CBD_{eta} needs {64 * eta} bytes, got {len(stream)}")
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8), bitorder="little").reshape(N, 2, eta)
    sums = bits.sum(axis=2, dtype=np.int64)
    return (sums[:, 0] - sums[:, 1]) % Q


def sample_ntt(seed: bytes) -> np.ndarray:
    """Rejection-sample a uniform NTT-domain polynomial from SHAKE128(seed)."""
    xof = hashlib.shake_128(seed)
    nbytes = 168 * 4
    while True:
        buf = np.frombuffer(xof.digest(nbytes), dtype=np.uint8).astype(np.int64)
        c = buf[: len(buf) // 3 * 3].reshape(-1, 3)
        d1 = c[:, 0] + 256 * (c[:, 1] & 0xF)
        d2 = (c[:, 1] >> 4) + 16 * c[:, 2]
        cand = np.stack([d1, d2], axis=1).reshape(-1)
        cand = cand[cand < Q]
        if len(cand) >= N:
            return cand[:N]
        # SHAKE output is prefix-consistent, so asking for more extends the stream
        nbytes += 168 * 2


def _prf(eta: int, s: bytes, b: int) -> bytes:
    return hashlib.shake_256(s + bytes([b])).digest(64 * eta)


def _h(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def _g(data: bytes) -> tuple[bytes, bytes]:
    out = hashlib.sha3_512(data).digest()
    return out[:32], out[32:]


def _j(data: bytes) -> bytes:
    return hashlib.shake_256(data).digest(32)


def _matrix(rho: bytes) -> np.ndarray:
    """A_hat[i][j] = SampleNTT(rho || j || i)."""
    a = np.empty((K, K, N), dtype=np.int64)
    for i in range(K):
        for j in range(K):
            a[i, j] = sample_ntt(rho + bytes([j, i]))
    return a


# -- K-PKE ---------------------------------------------------------------------

def pke_keygen(d: bytes) -> tuple[bytes, bytes]:
    rho, sigma = _g(d + bytes([K]))
    a_hat = _matrix(rho)
    s = PolyVec(np.stack([sample_cbd(_prf(ETA1, sigma, i), ETA1) for i in range(K)])).to_ntt()
    e = PolyVec(np.stack([sample_cbd(_prf(ETA1, sigma, K + i), ETA1) for i in range(K)])).to_ntt()
    t_hat = (ntt_multiply(a_hat, s.coeffs[None, :, :]).sum(axis=1) + e.coeffs) % Q
    return byte_encode(t_hat, 12) + rho, byte_encode(s.coeffs, 12)


def pke_encrypt(ek: bytes, m: bytes, r: bytes) -> bytes:
    t_hat = PolyVec(byte_decode(ek[: 384 * K], 12), True)
    a_hat = _matrix(ek[384 * K :])
    counter = 0
    ys, e1 = [], []
    for _ in range(K):
        ys.append(sample_cbd(_prf(ETA1, r, counter), ETA1))
        counter += 1
    for _ in range(K):
        e1.append(sample_cbd(_prf(ETA2, r, counter), ETA2))
        counter += 1
    e2 = sample_cbd(_prf(ETA2, r, counter), ETA2)
    y = PolyVec(np.stack(ys)).to_ntt()
    # u_i = sum_j A_hat[j][i] * y_j  (transpose of A)
    u_hat = ntt_multiply(a_hat.transpose(1, 0, 2), y.coeffs[None, :, :]).sum(axis=1) % Q
    u = (ntt_inverse(u_hat) + np.stack(e1)) % Q
    mu = decompress_coeff(byte_decode(m, 1)[0], 1)
    v = (ntt_inverse(t_hat.dot(y)) + e2 + mu) % Q
    c1 = byte_encode(compress_coeff(u, DU), DU)
    c2 = byte_encode(compress_coeff(v, DV), DV)
    return c1 + c2


def pke_decrypt(dk: bytes, c: bytes) -> bytes:
    split = 32 * DU * K
    u = PolyVec(decompress_coeff(byte_decode(c[:split], DU), DU))
    v = decompress_coeff(byte_decode(c[split:], DV)[0], DV)
    s_hat = PolyVec(byte_decode(dk, 12), True)
    w = (v - ntt_inverse(s_hat.dot(u.to_ntt()))) % Q
    return byte_encode(compress_coeff(w, 1), 1)


# -- ML-KEM ----------------------------------------------------------------------

def keygen_internal(d: bytes, z: bytes) -> tuple[bytes, bytes]:
    """Deterministic key generation from the 32-byte seeds d and z."""
    ek, dk_pke = pke_keygen(d)
    return ek, dk_pke + ek + _h(ek) + z


def check_encapsulation_key(ek: bytes) -> None:
    if len(ek) != PUBLIC_KEY_BYTES:
        raise MalformedPublicKey(f"ML-KEM-512 public key must be {PUBLIC_KEY_BYTES} bytes, got {len(ek)}")
    body = ek[: 384 * K]
    if byte_encode(byte_decode(body, 12), 12) != body:
        raise MalformedPublicKey("public key coefficients not reduced mod q")


def encaps_internal(ek: bytes, m: bytes) -> tuple[bytes, bytes]:
    """Deterministic encapsulation with message seed m; returns (ct, shared secret)."""
    check_encapsulation_key(ek)
    key, r = _g(m + _h(ek))
    return pke_encrypt(ek, m, r), key


def decaps(dk: bytes, c: bytes) -> bytes:
    if len(c) != CIPHERTEXT_BYTES:
        raise MalformedCiphertext(f"ML-KEM-512 ciphertext must be {CIPHERTEXT_BYTES} bytes, got {len(c)}")
    if len(dk) != SECRET_KEY_BYTES:
        raise ValueError(f"ML-KEM-512 secret key must be {SECRET_KEY_BYTES} bytes")
    dk_pke = dk[: 384 * K]
    ek = dk[384 * K : 768 * K + 32]
    h = dk[768 * K + 32 : 768 * K + 64]
    z = dk[768 * K + 64 :]
    if _h(ek) != h:
        raise ValueError("secret key hash check failed")
    m2 = pke_decrypt(dk_pke, c)
    key2, r2 = _g(m2 + h)
    rejected = _j(z + c)
    c2 = pke_encrypt(ek, m2, r2)
    # implicit rejection: a mismatching re-encryption yields J(z || c)
    ok = int(np.all(np.frombuffer(c, np.uint8) == np.frombuffer(c2, np.uint8)))
    mask = (-ok) & 0xFF
    return bytes((a & mask) | (b & ~mask & 0xFF) for a, b in zip(key2, rejected))
