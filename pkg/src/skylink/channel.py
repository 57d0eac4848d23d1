"""Handshake and record layer binding the KEMs to EAX.

Wire record (big-endian)::

    "SUC1" | version u8 = 1 | type u8 | length u32 | body

Sealed records (FINISHED, DATA, ACK) carry
``counter u64 | hdr_len u16 | header | eax(C || T)``.

A connection is anything socket-like offering ``sendall(data)`` and
``recv(n)``; ``settimeout`` is honoured when present.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import random
import socket
import struct
from dataclasses import dataclass, field

from . import eax
from .errors import (
    AuthenticationFailed,
    CounterExhausted,
    HandshakeTampered,
    HandshakeTimeout,
    InvalidCiphertext,
    MalformedCiphertext,
    MalformedFrame,
    MalformedHello,
    MalformedPublicKey,
    NonceReuse,
    ReplayDetected,
    SchemeRejected,
    SessionClosed,
)
from .kem import KemScheme, kem_decapsulate, kem_encapsulate, kem_keygen

MAGIC = b"SUC1"
VERSION = 0x01
HEADER_LEN = 10
MAX_FRAME_LEN = 16 * 1024 * 1024
COUNTER_LIMIT = 2**64 - 1
RANDOM_LEN = 16

_RECORD_HEADER = struct.Struct(">4sBBI")
_SYSTEM_RNG = random.SystemRandom()


class FrameType(enum.IntEnum):
    CLIENT_HELLO = 0x01
    SERVER_HELLO = 0x02
    KEM_CIPHERTEXT = 0x03
    FINISHED = 0x04
    DATA = 0x10
    ACK = 0x11
    CLOSE = 0x1F


SEALED_TYPES = frozenset({FrameType.FINISHED, FrameType.DATA, FrameType.ACK})


class Role(enum.Enum):
    CLIENT = "client"
    SERVER = "server"


# -- records -----------------------------------------------------------------

def encode_record(frame_type: int, body: bytes) -> bytes:
    if len(body) > MAX_FRAME_LEN:
        raise MalformedFrame(f"body of {len(body)} bytes exceeds the {MAX_FRAME_LEN}-byte cap")
    return _RECORD_HEADER.pack(MAGIC, VERSION, int(frame_type), len(body)) + body


def parse_record_header(header: bytes) -> tuple[FrameType, int]:
    """Validate the fixed 10-byte prefix and return (type, body length)."""
    if len(header) != HEADER_LEN:
        raise MalformedFrame("truncated record header")
    magic, version, ftype, length = _RECORD_HEADER.unpack(header)
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrame(f"unknown version {version}")
    if length > MAX_FRAME_LEN:
        raise MalformedFrame(f"declared length {length} exceeds cap")
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise MalformedFrame(f"unknown frame type 0x{ftype:02x}") from None
    return ftype, length


def decode_record(data: bytes) -> tuple[FrameType, bytes]:
    ftype, length = parse_record_header(bytes(data[:HEADER_LEN]))
    if len(data) != HEADER_LEN + length:
        raise MalformedFrame(f"declared length {length} but {len(data) - HEADER_LEN} body bytes present")
    return ftype, bytes(data[HEADER_LEN:])


def _recv_exact(conn, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = conn.recv(min(n - len(buf), 1 << 20))
        except socket.timeout as exc:
            raise HandshakeTimeout("timed out waiting for peer") from exc
        if not chunk:
            raise ConnectionError("connection closed by peer")
        buf += chunk
    return bytes(buf)


def read_record(conn) -> tuple[FrameType, bytes, bytes]:
    """Read one record; returns (type, body, raw bytes as received)."""
    header = _recv_exact(conn, HEADER_LEN)
    ftype, length = parse_record_header(header)
    body = _recv_exact(conn, length) if length else b""
    return ftype, body, header + body


def write_record(conn, frame_type: int, body: bytes) -> bytes:
    raw = encode_record(frame_type, body)
    conn.sendall(raw)
    return raw


# -- sealed frames ---------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    frame_type: FrameType
    counter: int
    header_bytes: bytes
    body: bytes

    def __post_init__(self):
        if self.frame_type not in SEALED_TYPES:
            raise MalformedFrame(f"{self.frame_type!r} is not a sealed frame type")
        if not 0 <= self.counter <= COUNTER_LIMIT:
            raise MalformedFrame("counter out of range")
        if len(self.body) < 16:
            raise MalformedFrame("sealed body shorter than the tag")


def encode_frame(frame: Frame) -> bytes:
    if len(frame.header_bytes) > 0xFFFF:
        raise MalformedFrame("header too long")
    body = struct.pack(">QH", frame.counter, len(frame.header_bytes)) + frame.header_bytes + frame.body
    return encode_record(frame.frame_type, body)


def frame_from_body(ftype: FrameType, body: bytes) -> Frame:
    if len(body) < 10:
        raise MalformedFrame("sealed body too short")
    counter, hlen = struct.unpack_from(">QH", body)
    if 10 + hlen > len(body):
        raise MalformedFrame("header length exceeds body")
    return Frame(ftype, counter, body[10 : 10 + hlen], body[10 + hlen :])


def decode_frame(data: bytes) -> Frame:
    ftype, body = decode_record(data)
    return frame_from_body(ftype, body)


# -- session -----------------------------------------------------------------------

_DIR_C2S = 0x01
_DIR_S2C = 0x02


def derive_session_keys(secret: bytes, transcript_hash: bytes) -> tuple[bytes, bytes]:
    if len(secret) != 32 or len(transcript_hash) != 32:
        raise ValueError("secret and transcript hash must both be 32 bytes")
    c2s = hashlib.sha256(secret + transcript_hash + b"\x01").digest()[:16]
    s2c = hashlib.sha256(secret + transcript_hash + b"\x02").digest()[:16]
    return c2s, s2c


def frame_nonce(direction: int, counter: int) -> bytes:
    return bytes([direction]) + bytes(7) + counter.to_bytes(8, "big")


def _aad(frame_type: int, counter: int, header_bytes: bytes) -> bytes:
    return bytes([int(frame_type)]) + counter.to_bytes(8, "big") + header_bytes


@dataclass
class Session:
    scheme: KemScheme
    role: Role
    key_c2s: bytes
    key_s2c: bytes
    transcript_hash: bytes
    send_counter: int = 1
    recv_counter: int = 0
    closed: bool = False
    _last_sent: int = field(default=0, repr=False)
    _keys: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.key_c2s == self.key_s2c:
            raise ValueError("directional keys must differ")
        self._keys = {_DIR_C2S: eax.EaxKey(self.key_c2s), _DIR_S2C: eax.EaxKey(self.key_s2c)}

    def __repr__(self):
        return (
            f"Session({self.scheme.name}, {self.role.value}, id={self.session_id}, "
            f"send={self.send_counter}, recv={self.recv_counter})"
        )

    @property
    def session_id(self) -> str:
        return self.transcript_hash[:8].hex()

    @property
    def _send_dir(self) -> int:
        return _DIR_C2S if self.role is Role.CLIENT else _DIR_S2C

    @property
    def _recv_dir(self) -> int:
        return _DIR_S2C if self.role is Role.CLIENT else _DIR_C2S

    def close(self):
        self.closed = True


def max_payload(header_bytes: bytes = b"") -> int:
    return MAX_FRAME_LEN - 10 - len(header_bytes) - 16


def seal_frame(session: Session, frame_type: int, header_bytes: bytes, payload: bytes) -> Frame:
    if session.closed:
        raise SessionClosed("session is closed")
    frame_type = FrameType(frame_type)
    counter = session.send_counter
    if counter >= COUNTER_LIMIT:
        session.close()
        raise CounterExhausted("send counter exhausted")
    if counter <= session._last_sent:
        raise NonceReuse(f"counter {counter} already used (last sent {session._last_sent})")
    if len(payload) > max_payload(header_bytes):
        raise ValueError("payload exceeds a single frame; chunk it")
    d = session._send_dir
    body = eax.eax_encrypt(session._keys[d], frame_nonce(d, counter), _aad(frame_type, counter, header_bytes), payload)
    session._last_sent = counter
    session.send_counter = counter + 1
    return Frame(frame_type, counter, bytes(header_bytes), body)


def open_frame(session: Session, frame: Frame) -> bytes:
    if session.closed:
        raise SessionClosed("session is closed")
    if frame.counter <= session.recv_counter:
        raise ReplayDetected(f"counter {frame.counter} <= last accepted {session.recv_counter}")
    d = session._recv_dir
    try:
        payload = eax.eax_decrypt(
            session._keys[d],
            frame_nonce(d, frame.counter),
            _aad(frame.frame_type, frame.counter, frame.header_bytes),
            frame.body,
        )
    except InvalidCiphertext as exc:
        raise AuthenticationFailed(str(exc)) from None
    session.recv_counter = frame.counter
    if frame.counter >= COUNTER_LIMIT:
        session.close()
    return payload


def send_sealed(conn, session: Session, frame_type: int, header_bytes: bytes, payload: bytes) -> Frame:
    frame = seal_frame(session, frame_type, header_bytes, payload)
    conn.sendall(encode_frame(frame))
    return frame


# -- handshake -----------------------------------------------------------------------

@dataclass(frozen=True)
class ClientHello:
    schemes: tuple
    random: bytes

    def encode(self) -> bytes:
        return bytes([len(self.schemes)]) + bytes(int(s) for s in self.schemes) + self.random

    @classmethod
    def decode(cls, body: bytes) -> ClientHello:
        if not body:
            raise MalformedHello("empty CLIENT_HELLO")
        n = body[0]
        if n == 0 or len(body) != 1 + n + RANDOM_LEN:
            raise MalformedHello("CLIENT_HELLO length mismatch")
        return cls(tuple(body[1 : 1 + n]), body[1 + n :])


@dataclass(frozen=True)
class ServerHello:
    scheme_id: int
    random: bytes
    public_key: bytes

    def encode(self) -> bytes:
        return bytes([self.scheme_id]) + self.random + struct.pack(">H", len(self.public_key)) + self.public_key

    @classmethod
    def decode(cls, body: bytes) -> ServerHello:
        if len(body) < 1 + RANDOM_LEN + 2:
            raise MalformedHello("SERVER_HELLO too short")
        (pk_len,) = struct.unpack_from(">H", body, 1 + RANDOM_LEN)
        if len(body) != 1 + RANDOM_LEN + 2 + pk_len:
            raise MalformedHello("SERVER_HELLO length mismatch")
        return cls(body[0], body[1 : 1 + RANDOM_LEN], body[1 + RANDOM_LEN + 2 :])


def encode_kem_ciphertext(ct: bytes) -> bytes:
    return struct.pack(">H", len(ct)) + ct


def decode_kem_ciphertext(body: bytes) -> bytes:
    if len(body) < 2:
        raise MalformedHello("KEM_CIPHERTEXT too short")
    (n,) = struct.unpack_from(">H", body)
    if len(body) != 2 + n:
        raise MalformedHello("KEM_CIPHERTEXT length mismatch")
    return body[2:]


class CloseReason(enum.IntEnum):
    NORMAL = 0
    SCHEME_REJECTED = 1
    HANDSHAKE_FAILED = 2
    BUSY = 3
    PROTOCOL_ERROR = 4
    TRANSFER_FAILED = 5


def encode_close(reason: CloseReason, message: str = "") -> bytes:
    return bytes([int(reason)]) + message.encode()[:1024]


def decode_close(body: bytes) -> tuple[int, str]:
    if not body:
        return CloseReason.NORMAL, ""
    return body[0], body[1:].decode(errors="replace")


def send_close(conn, reason: CloseReason, message: str = "") -> None:
    try:
        write_record(conn, FrameType.CLOSE, encode_close(reason, message))
    except OSError:
        pass


def _set_timeout(conn, timeout):
    if timeout is not None and hasattr(conn, "settimeout"):
        conn.settimeout(timeout)


def _expect(conn, wanted: FrameType, on_garbage=HandshakeTampered):
    try:
        ftype, body, raw = read_record(conn)
    except MalformedFrame as exc:
        raise on_garbage(f"garbled handshake record: {exc}") from None
    except ConnectionError as exc:
        raise on_garbage(f"peer went away during handshake: {exc}") from None
    if ftype is FrameType.CLOSE:
        reason, msg = decode_close(body)
        if reason == CloseReason.SCHEME_REJECTED:
            raise SchemeRejected(f"peer rejected negotiation: {msg}")
        if reason == CloseReason.BUSY:
            raise SessionClosed(f"peer refused the session: {msg}")
        raise on_garbage(f"peer aborted handshake ({reason}): {msg}")
    if ftype is not wanted:
        raise on_garbage(f"expected {wanted.name}, got {ftype.name}")
    return body, raw


def _hs_write(conn, frame_type: int, body: bytes) -> bytes:
    # a peer that aborted the handshake may close before our next record lands
    try:
        return write_record(conn, frame_type, body)
    except ConnectionError as exc:
        raise HandshakeTampered(f"peer went away during handshake: {exc}") from None


def _send_finished(conn, session: Session) -> None:
    frame = seal_frame(session, FrameType.FINISHED, b"", session.transcript_hash)
    body = encode_frame(frame)[HEADER_LEN:]
    _hs_write(conn, FrameType.FINISHED, body)


def _check_finished(session: Session, body: bytes) -> None:
    try:
        frame = frame_from_body(FrameType.FINISHED, body)
        payload = open_frame(session, frame)
    except (AuthenticationFailed, ReplayDetected, MalformedFrame) as exc:
        raise HandshakeTampered(f"FINISHED did not verify: {exc}") from None
    if not hmac.compare_digest(payload, session.transcript_hash):
        raise HandshakeTampered("FINISHED carries a different transcript")


def handshake_client(conn, preferred_scheme, rng=None, *, offered=None, timeout: float | None = 10.0) -> Session:
    """Run the client side of the handshake and return a live session.

    ``offered`` lists every scheme the client is willing to use (default:
    just ``preferred_scheme``); the preferred one is listed first.
    """
    preferred = KemScheme.parse(preferred_scheme)
    schemes = [preferred] + [KemScheme.parse(s) for s in (offered or []) if KemScheme.parse(s) is not preferred]
    rng = rng or _SYSTEM_RNG
    _set_timeout(conn, timeout)

    hello = ClientHello(tuple(schemes), rng.randbytes(RANDOM_LEN))
    transcript = _hs_write(conn, FrameType.CLIENT_HELLO, hello.encode())

    body, raw = _expect(conn, FrameType.SERVER_HELLO)
    transcript += raw
    try:
        sh = ServerHello.decode(body)
    except MalformedHello as exc:
        raise HandshakeTampered(str(exc)) from None
    if sh.scheme_id not in [int(s) for s in schemes]:
        send_close(conn, CloseReason.SCHEME_REJECTED, f"unoffered scheme 0x{sh.scheme_id:02x}")
        raise SchemeRejected(f"server selected scheme 0x{sh.scheme_id:02x}, which was not offered")
    scheme = KemScheme(sh.scheme_id)
    try:
        ct, secret = kem_encapsulate(scheme, sh.public_key, rng)
    except MalformedPublicKey as exc:
        send_close(conn, CloseReason.HANDSHAKE_FAILED, "bad public key")
        raise HandshakeTampered(f"server public key unusable: {exc}") from None
    transcript += _hs_write(conn, FrameType.KEM_CIPHERTEXT, encode_kem_ciphertext(ct))

    th = hashlib.sha256(transcript).digest()
    c2s, s2c = derive_session_keys(secret, th)
    session = Session(scheme, Role.CLIENT, c2s, s2c, th)
    _send_finished(conn, session)

    body, _ = _expect(conn, FrameType.FINISHED)
    _check_finished(session, body)
    return session


def handshake_server(conn, allowed_schemes=None, rng=None, *, timeout: float | None = 10.0) -> Session:
    allowed = [KemScheme.parse(s) for s in (allowed_schemes or list(KemScheme))]
    rng = rng or _SYSTEM_RNG
    _set_timeout(conn, timeout)

    body, raw = _expect(conn, FrameType.CLIENT_HELLO, on_garbage=MalformedHello)
    transcript = raw
    ch = ClientHello.decode(body)
    chosen = next((KemScheme(s) for s in ch.schemes if s in [int(a) for a in allowed]), None)
    if chosen is None:
        send_close(conn, CloseReason.SCHEME_REJECTED, "no common KEM")
        raise SchemeRejected(f"client offered {list(ch.schemes)}, server allows {[int(a) for a in allowed]}")

    keypair = kem_keygen(chosen, rng)
    sh = ServerHello(int(chosen), rng.randbytes(RANDOM_LEN), keypair.public_key)
    transcript += _hs_write(conn, FrameType.SERVER_HELLO, sh.encode())

    body, raw = _expect(conn, FrameType.KEM_CIPHERTEXT)
    transcript += raw
    try:
        ct = decode_kem_ciphertext(body)
        secret = kem_decapsulate(chosen, keypair.secret_key, ct)
    except (MalformedHello, MalformedCiphertext) as exc:
        send_close(conn, CloseReason.HANDSHAKE_FAILED, "bad KEM ciphertext")
        raise HandshakeTampered(str(exc)) from None

    th = hashlib.sha256(transcript).digest()
    c2s, s2c = derive_session_keys(secret, th)
    session = Session(chosen, Role.SERVER, c2s, s2c, th)

    body, _ = _expect(conn, FrameType.FINISHED)
    try:
        _check_finished(session, body)
    except HandshakeTampered:
        send_close(conn, CloseReason.HANDSHAKE_FAILED, "FINISHED mismatch")
        raise
    _send_finished(conn, session)
    return session


__all__ = [
    "MAGIC",
    "MAX_FRAME_LEN",
    "FrameType",
    "Role",
    "Frame",
    "Session",
    "ClientHello",
    "ServerHello",
    "CloseReason",
    "encode_record",
    "decode_record",
    "read_record",
    "write_record",
    "encode_frame",
    "decode_frame",
    "frame_from_body",
    "derive_session_keys",
    "frame_nonce",
    "seal_frame",
    "open_frame",
    "send_sealed",
    "send_close",
    "decode_close",
    "handshake_client",
    "handshake_server",
]
