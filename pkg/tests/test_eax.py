import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harness import DATA
from skylink.eax import (
    EaxKey,
    cmac,
    ctr_keystream,
    eax_decrypt,
    eax_encrypt,
    omac_t,
    read_vectors,
)
from skylink.errors import InvalidCiphertext

VECTORS = read_vectors(DATA / "eax_aes128_vectors.txt")
K = bytes(range(16))


def _xor(*blocks):
    out = bytearray(len(blocks[0]))
    for b in blocks:
        for i, x in enumerate(b):
            out[i] ^= x
    return bytes(out)


def test_vector_file_has_the_full_published_set():
    assert len(VECTORS) == 10


@pytest.mark.parametrize("vec", VECTORS, ids=[f"vec{i}" for i in range(len(VECTORS))])
def test_published_vectors_reproduce(vec):
    key, nonce, header, msg, cipher = vec
    assert eax_encrypt(key, nonce, header, msg) == cipher
    assert eax_decrypt(key, nonce, header, cipher) == msg


@pytest.mark.parametrize("vec", VECTORS[:3])
def test_tag_is_xor_of_the_three_omacs(vec):
    key, nonce, header, msg, cipher = vec
    c, t = cipher[:-16], cipher[-16:]
    assert t == _xor(omac_t(key, 0, nonce), omac_t(key, 1, header), omac_t(key, 2, c))
    assert ctr_keystream(key, omac_t(key, 0, nonce), msg) == c


def test_cmac_rfc4493_examples():
    # independent AES-CMAC examples for the key 2b7e1516...
    key = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
    msg = bytes.fromhex(
        "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51"
        "30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710"
    )
    assert cmac(key, b"").hex() == "bb1d6929e95937287fa37d129b756746"
    assert cmac(key, msg[:16]).hex() == "070a16b46b4d4144f79bdd9dd04a287c"
    assert cmac(key, msg[:40]).hex() == "dfa66747de9ae63030ca32611497c827"
    assert cmac(key, msg).hex() == "51f0bebf7e3b9d92fc49741779363cfe"


def test_omac_of_empty_is_cmac_of_tweak_block():
    assert omac_t(K, 0, b"") == cmac(K, bytes(16))
    assert omac_t(K, 2, b"") == cmac(K, (2).to_bytes(16, "big"))


def test_omac_tweaks_separate_domains():
    rng = random.Random(1)
    for _ in range(50):
        m = rng.randbytes(rng.randrange(0, 80))
        assert omac_t(K, 1, m) != omac_t(K, 2, m)
        assert omac_t(K, 0, m) == omac_t(K, 0, m)


def test_omac_rejects_unknown_tweak():
    with pytest.raises(ValueError):
        omac_t(K, 3, b"")


def test_ctr_empty_and_involution():
    ctr0 = bytes(16)
    assert ctr_keystream(K, ctr0, b"") == b""
    data = random.Random(2).randbytes(1 << 20)
    once = ctr_keystream(K, ctr0, data)
    assert len(once) == len(data) and once != data
    assert ctr_keystream(K, ctr0, once) == data


def test_ctr_wraps_at_2_128():
    top = b"\xff" * 16
    stream = ctr_keystream(K, top, bytes(48))
    key = EaxKey(K)
    assert stream[:16] == key.ecb(top)
    assert stream[16:32] == key.ecb(bytes(16))
    assert stream[32:] == key.ecb((1).to_bytes(16, "big"))


def test_ctr_carries_into_high_word():
    start = (2**64 - 1).to_bytes(16, "big")
    stream = ctr_keystream(K, start, bytes(32))
    assert stream[16:] == EaxKey(K).ecb((2**64).to_bytes(16, "big"))


def test_empty_message_yields_bare_tag():
    assert len(eax_encrypt(K, b"n", b"h", b"")) == 16


def test_header_change_moves_tag_only():
    a = eax_encrypt(K, b"nonce", b"header-1", b"payload bytes")
    b = eax_encrypt(K, b"nonce", b"header-2", b"payload bytes")
    assert a[:-16] == b[:-16]
    assert a[-16:] != b[-16:]


@pytest.mark.parametrize("tau", [8, 32, 64, 96, 128])
def test_truncated_tags(tau):
    ct = eax_encrypt(K, b"N", b"H", b"message", tau=tau)
    assert len(ct) == 7 + tau // 8
    assert eax_decrypt(K, b"N", b"H", ct, tau=tau) == b"message"
    full = eax_encrypt(K, b"N", b"H", b"message")
    assert ct[-tau // 8 :] == full[-16:][: tau // 8]


@pytest.mark.parametrize("tau", [0, 7, 136])
def test_bad_tau_rejected(tau):
    with pytest.raises(ValueError):
        eax_encrypt(K, b"N", b"", b"", tau=tau)


def test_short_ciphertext_is_invalid():
    for n in range(16):
        with pytest.raises(InvalidCiphertext):
            eax_decrypt(K, b"N", b"", bytes(n))


def test_every_single_bit_flip_is_rejected():
    rng = random.Random(3)
    nonce, header, msg = rng.randbytes(16), rng.randbytes(24), rng.randbytes(64)
    ct = eax_encrypt(K, nonce, header, msg)
    fields = {"ct": ct, "nonce": nonce, "header": header}
    for name, value in fields.items():
        for i in range(len(value) * 8):
            bad = bytearray(value)
            bad[i // 8] ^= 1 << (i % 8)
            args = dict(fields, **{name: bytes(bad)})
            with pytest.raises(InvalidCiphertext):
                eax_decrypt(K, args["nonce"], args["header"], args["ct"])


def test_aes256_keys_work():
    key = bytes(range(32))
    ct = eax_encrypt(key, b"N", b"H", b"data")
    assert eax_decrypt(key, b"N", b"H", ct) == b"data"


@pytest.mark.parametrize("n", [0, 15, 17, 31])
def test_bad_key_lengths(n):
    with pytest.raises(ValueError):
        EaxKey(bytes(n))


def test_empty_nonce_rejected():
    with pytest.raises(ValueError):
        eax_encrypt(K, b"", b"", b"x")


def test_agrees_with_pycryptodome_on_random_inputs():
    AES = pytest.importorskip("Crypto.Cipher.AES")
    rng = random.Random(4)
    for _ in range(200):
        key = rng.randbytes(rng.choice((16, 32)))
        nonce = rng.randbytes(rng.randrange(1, 40))
        header = rng.randbytes(rng.randrange(0, 70))
        msg = rng.randbytes(rng.randrange(0, 300))
        ref = AES.new(key, AES.MODE_EAX, nonce=nonce)
        ref.update(header)
        c, t = ref.encrypt_and_digest(msg)
        assert eax_encrypt(key, nonce, header, msg) == c + t


@settings(max_examples=200, deadline=None)
@given(
    key=st.binary(min_size=16, max_size=16),
    nonce=st.binary(min_size=1, max_size=32),
    header=st.binary(max_size=64),
    msg=st.binary(max_size=256),
)
def test_roundtrip_and_length_law(key, nonce, header, msg):
    ct = eax_encrypt(key, nonce, header, msg)
    assert len(ct) == len(msg) + 16
    assert eax_decrypt(key, nonce, header, ct) == msg


def test_vector_reader_rejects_bad_rows(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("00,11\n")
    with pytest.raises(ValueError):
        read_vectors(p)
