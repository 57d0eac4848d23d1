"""Ground-station server and UAV client for encrypted media transfer.

Data phase, after the handshake, client to server:

* DATA with header ``0x01``: file announcement, JSON payload
  ``{"name", "kind", "size", "sha256", "chunk_size"}``
* DATA with header ``0x02 | index u32``: one chunk of file content
* CLOSE: end of session

The server answers every completed file with one sealed ACK whose JSON
payload is ``{"status": "ok"|"nack", "file", "digest", "decrypt_s"}``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import channel
from .channel import CloseReason, FrameType
from .errors import (
    BindFailure,
    ChannelError,
    ConnectFailure,
    TransferRejected,
)
from .kem import KemScheme
from .telemetry import MetricRecord, MetricsSink, RunClock

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 65536
MIN_CHUNK = 1024
MAX_CHUNK = 1024 * 1024

HDR_FILE = b"\x01"
HDR_CHUNK = b"\x02"

MEDIA_KINDS = ("video", "audio", "image", "telemetry")
_EXT_KIND = {
    ".mp4": "video", ".mkv": "video", ".avi": "video", ".mov": "video", ".h264": "video",
    ".wav": "audio", ".mp3": "audio", ".flac": "audio", ".ogg": "audio", ".aac": "audio",
    ".jpg": "image", ".jpeg": "image", ".png": "image", ".tif": "image", ".tiff": "image",
}


@dataclass
class StationConfig:
    host: str = "127.0.0.1"
    port: int = 0
    allowed_schemes: tuple = (KemScheme.ML_KEM_512, KemScheme.ECDH_KEM)
    preferred_scheme: KemScheme = KemScheme.ML_KEM_512
    storage_dir: Path = Path("storage")
    timeout_s: float = 30.0
    max_sessions: int = 8
    environment: str = "loopback"

    def __post_init__(self):
        if self.max_sessions < 1:
            raise ValueError("max_sessions must be >= 1")
        if not self.timeout_s > 0:
            raise ValueError("timeout must be positive")
        self.allowed_schemes = tuple(KemScheme.parse(s) for s in self.allowed_schemes)
        self.preferred_scheme = KemScheme.parse(self.preferred_scheme)
        self.storage_dir = Path(self.storage_dir)

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port


@dataclass(frozen=True)
class TransferManifest:
    path: Path
    kind: str
    sha256: str
    size: int
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if not MIN_CHUNK <= self.chunk_size <= MAX_CHUNK:
            raise ValueError(f"chunk size must be within [{MIN_CHUNK}, {MAX_CHUNK}]")
        if self.kind not in MEDIA_KINDS:
            raise ValueError(f"unknown media kind {self.kind!r}")

    @classmethod
    def for_file(cls, path, kind: str | None = None, chunk_size: int = DEFAULT_CHUNK) -> TransferManifest:
        path = Path(path)
        h = hashlib.sha256()
        with path.open("rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
        kind = kind or _EXT_KIND.get(path.suffix.lower(), "telemetry")
        return cls(path, kind, h.hexdigest(), path.stat().st_size, chunk_size)

    def announcement(self) -> bytes:
        return json.dumps(
            {
                "name": self.path.name,
                "kind": self.kind,
                "size": self.size,
                "sha256": self.sha256,
                "chunk_size": self.chunk_size,
            },
            sort_keys=True,
        ).encode()


class TrafficLog:
    """Append-only, thread-safe per-frame log kept by the ground station."""

    FIELDS = ("session_id", "timestamp_s", "frame_type", "wire_bytes", "payload_bytes", "file", "file_size")

    def __init__(self):
        self._rows: list[dict] = []
        self._lock = threading.Lock()

    def append(self, **row) -> None:
        with self._lock:
            self._rows.append({k: row.get(k) for k in self.FIELDS})

    @property
    def rows(self) -> list[dict]:
        with self._lock:
            return list(self._rows)

    def __len__(self):
        with self._lock:
            return len(self._rows)

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.FIELDS)
            w.writeheader()
            w.writerows(self.rows)


# -- server --------------------------------------------------------------------

def _safe_name(name: str) -> str:
    base = Path(str(name)).name
    if base in ("", ".", "..") or base.startswith(".") and base.endswith(".part"):
        raise ValueError(f"unacceptable file name {name!r}")
    return base


class _Incoming:
    def __init__(self, directory: Path, meta: dict):
        self.name = _safe_name(meta["name"])
        self.kind = meta.get("kind", "telemetry")
        self.size = int(meta["size"])
        self.expected = str(meta["sha256"]).lower()
        if self.size < 0:
            raise ValueError("negative size")
        self.final = directory / self.name
        self.part = directory / f".{self.name}.part"
        self.fh = self.part.open("wb")
        self.hasher = hashlib.sha256()
        self.received = 0
        self.next_index = 0
        self.started_at = time.time()
        self.first_frame = time.perf_counter()
        self.decrypt_s = 0.0

    def write(self, index: int, data: bytes) -> None:
        if index != self.next_index:
            raise ValueError(f"chunk {index} out of order (expected {self.next_index})")
        if self.received + len(data) > self.size:
            raise ValueError("more data than announced")
        self.fh.write(data)
        self.hasher.update(data)
        self.received += len(data)
        self.next_index += 1

    @property
    def complete(self) -> bool:
        return self.received == self.size

    def discard(self) -> None:
        try:
            self.fh.close()
        finally:
            self.part.unlink(missing_ok=True)


class GroundStation:
    """Threaded TCP server; one handler thread per UAV connection."""

    def __init__(self, config: StationConfig, metrics: MetricsSink | None = None,
                 traffic: TrafficLog | None = None, rng=None):
        self.config = config
        self.metrics = metrics if metrics is not None else MetricsSink()
        self.traffic = traffic if traffic is not None else TrafficLog()
        self._rng = rng
        self._rng_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(config.max_sessions)
        self._server = None
        self._thread = None
        self.sessions_completed = 0
        self.sessions_failed = 0
        self.refused = 0
        self._count_lock = threading.Lock()
        self._active = 0
        self._idle = threading.Condition()

    # socketserver glue
    def _make_server(self):
        station = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                _no_delay(self.request)
                station.handle_connection(self.request)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        try:
            return Server(self.config.address, Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {self.config.address}: {exc}") from exc

    def start(self) -> tuple[str, int]:
        """Bind and serve on a background thread; returns the bound address."""
        self.config.storage_dir.mkdir(parents=True, exist_ok=True)
        self._server = self._make_server()
        self._thread = threading.Thread(target=self._server.serve_forever, name="ground-station", daemon=True)
        self._thread.start()
        return self._server.server_address[:2]

    def serve_forever(self) -> None:
        self.config.storage_dir.mkdir(parents=True, exist_ok=True)
        self._server = self._make_server()
        try:
            self._server.serve_forever()
        finally:
            self._server.server_close()

    def wait_idle(self, timeout: float | None = None) -> bool:
        """Block until no session handler is running; False on timeout."""
        with self._idle:
            return self._idle.wait_for(lambda: self._active == 0, timeout)

    def shutdown(self, grace_s: float = 5.0) -> None:
        """Stop accepting, then give running sessions ``grace_s`` to finish."""
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._thread is not None:
            self._thread.join()
        self.wait_idle(grace_s)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()
        return False

    @property
    def address(self):
        return self._server.server_address[:2]

    def _session_rng(self):
        if self._rng is None:
            return None
        with self._rng_lock:
            return random.Random(self._rng.getrandbits(64))

    def _bump(self, attr):
        with self._count_lock:
            setattr(self, attr, getattr(self, attr) + 1)

    def handle_connection(self, conn) -> None:
        with self._idle:
            self._active += 1
        try:
            self._handle(conn)
        finally:
            with self._idle:
                self._active -= 1
                self._idle.notify_all()

    def _handle(self, conn) -> None:
        if not self._slots.acquire(blocking=False):
            self._bump("refused")
            channel.send_close(conn, CloseReason.BUSY, "too many sessions")
            return
        try:
            self._serve_session(conn)
            self._bump("sessions_completed")
        except Exception as exc:  # one bad client must never take the station down
            self._bump("sessions_failed")
            log.warning("session from %s ended with error: %s", _peer(conn), exc)
        finally:
            self._slots.release()

    def _serve_session(self, conn) -> None:
        cfg = self.config
        t0 = time.perf_counter()
        session = channel.handshake_server(conn, cfg.allowed_schemes, self._session_rng(), timeout=cfg.timeout_s)
        handshake_ms = (time.perf_counter() - t0) * 1000
        clock = RunClock(session.session_id)
        sdir = cfg.storage_dir / session.session_id
        sdir.mkdir(parents=True, exist_ok=True)
        receipts = sdir / "receipts.jsonl"
        current: _Incoming | None = None
        log.info("session %s established (%s)", session.session_id, session.scheme.label)
        try:
            while True:
                ftype, body, raw = channel.read_record(conn)
                now = time.time()
                if ftype is FrameType.CLOSE:
                    self.traffic.append(session_id=session.session_id, timestamp_s=now, frame_type=ftype.name,
                                        wire_bytes=len(raw), payload_bytes=0, file=None, file_size=None)
                    break
                if ftype is not FrameType.DATA:
                    raise ChannelError(f"unexpected {ftype.name} during data phase")
                frame = channel.frame_from_body(ftype, body)
                with clock.section("decrypt") as t:
                    payload = channel.open_frame(session, frame)
                hdr = frame.header_bytes
                if hdr == HDR_FILE:
                    if current is not None:
                        raise ChannelError("new file announced before the previous one completed")
                    current = _Incoming(sdir, json.loads(payload))
                elif hdr[:1] == HDR_CHUNK and len(hdr) == 5:
                    if current is None:
                        raise ChannelError("chunk without an announced file")
                    current.write(struct.unpack(">I", hdr[1:])[0], payload)
                else:
                    raise ChannelError(f"unknown data header {hdr!r}")
                current.decrypt_s += t.elapsed
                self.traffic.append(session_id=session.session_id, timestamp_s=now, frame_type=ftype.name,
                                    wire_bytes=len(raw), payload_bytes=len(payload),
                                    file=current.name, file_size=current.size)
                if current.complete:
                    self._finish_file(conn, session, clock, current, receipts)
                    current = None
        except BaseException:
            if current is not None:
                current.discard()
            raise
        finally:
            session.close()
            self.metrics.append(
                MetricRecord(
                    run_id=session.session_id,
                    scheme=session.scheme.label,
                    environment=cfg.environment,
                    handshake_time_ms=handshake_ms,
                    encryption_time_s=clock.total("encrypt"),
                    decryption_time_s=clock.total("decrypt"),
                    connection_duration_s=time.perf_counter() - t0,
                    server_response_time_s=clock.total("response"),
                )
            )
        if current is not None:
            current.discard()
            raise ChannelError("session closed mid-transfer")

    def _finish_file(self, conn, session, clock, inc: _Incoming, receipts: Path) -> None:
        inc.fh.close()
        digest = inc.hasher.hexdigest()
        ok = digest == inc.expected
        if ok:
            os.replace(inc.part, inc.final)
            with receipts.open("a") as fh:
                fh.write(json.dumps({
                    "file": inc.name,
                    "bytes": inc.received,
                    "digest": digest,
                    "started_at": inc.started_at,
                    "finished_at": time.time(),
                }) + "\n")
        else:
            inc.part.unlink(missing_ok=True)
            log.warning("session %s: digest mismatch for %s", session.session_id, inc.name)
        ack = json.dumps({
            "status": "ok" if ok else "nack",
            "file": inc.name,
            "digest": digest,
            "decrypt_s": inc.decrypt_s,
        }).encode()
        with clock.section("encrypt"):
            frame = channel.seal_frame(session, FrameType.ACK, b"", ack)
        conn.sendall(channel.encode_frame(frame))
        clock.add("response", time.perf_counter() - inc.first_frame)


def _peer(conn):
    try:
        return conn.getpeername()
    except OSError:
        return "?"


def run_ground_station(config: StationConfig, stop_event: threading.Event | None = None, **kwargs) -> GroundStation:
    """Serve until ``stop_event`` is set (or forever, when none is given)."""
    station = GroundStation(config, **kwargs)
    if stop_event is None:
        station.serve_forever()
        return station
    station.start()
    try:
        stop_event.wait()
    finally:
        station.shutdown()
    return station


# -- client --------------------------------------------------------------------------

@dataclass
class FileReport:
    name: str
    bytes: int
    chunks: int
    encryption_time_s: float
    decryption_time_s: float
    response_time_s: float


@dataclass
class TransferReport:
    session_id: str
    scheme: str
    handshake_time_ms: float
    connection_duration_s: float = 0.0
    files: list[FileReport] = field(default_factory=list)

    @property
    def encryption_time_s(self) -> float:
        return sum(f.encryption_time_s for f in self.files)

    @property
    def decryption_time_s(self) -> float:
        return sum(f.decryption_time_s for f in self.files)

    @property
    def server_response_time_s(self) -> float:
        return sum(f.response_time_s for f in self.files)

    def to_metric_record(self, run_id: str, environment: str = "loopback",
                         cpu_percent: float | None = None, memory_mb: float | None = None) -> MetricRecord:
        return MetricRecord(
            run_id=run_id,
            scheme=self.scheme,
            environment=environment,
            handshake_time_ms=self.handshake_time_ms,
            encryption_time_s=self.encryption_time_s,
            decryption_time_s=self.decryption_time_s,
            connection_duration_s=self.connection_duration_s,
            server_response_time_s=self.server_response_time_s,
            cpu_usage_percent=cpu_percent,
            memory_usage_mb=memory_mb,
        )


def _no_delay(conn) -> None:
    # handshake and ACK records are small back-to-back writes; Nagle plus
    # delayed ACK would add ~40 ms stalls to every round trip
    try:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    except OSError:
        pass


def _connect(address, timeout):
    try:
        conn = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        raise ConnectFailure(f"cannot reach {address}: {exc}") from exc
    _no_delay(conn)
    return conn


def _await_ack(conn, session) -> dict:
    ftype, body, _ = channel.read_record(conn)
    if ftype is FrameType.CLOSE:
        reason, msg = channel.decode_close(body)
        raise TransferRejected(f"server closed the session ({reason}): {msg}")
    if ftype is not FrameType.ACK:
        raise ChannelError(f"expected ACK, got {ftype.name}")
    return json.loads(channel.open_frame(session, channel.frame_from_body(ftype, body)))


def send_file(conn, session, manifest: TransferManifest) -> FileReport:
    enc = 0.0
    chunks = 0
    t_first = time.perf_counter()

    def push(header, payload):
        nonlocal enc
        t = time.perf_counter()
        frame = channel.seal_frame(session, FrameType.DATA, header, payload)
        enc += time.perf_counter() - t
        conn.sendall(channel.encode_frame(frame))

    push(HDR_FILE, manifest.announcement())
    with manifest.path.open("rb") as fh:
        for block in iter(lambda: fh.read(manifest.chunk_size), b""):
            push(HDR_CHUNK + struct.pack(">I", chunks), block)
            chunks += 1
    ack = _await_ack(conn, session)
    response = time.perf_counter() - t_first
    if ack.get("status") != "ok":
        raise TransferRejected(f"server rejected {manifest.path.name}: digest {ack.get('digest')}")
    return FileReport(manifest.path.name, manifest.size, chunks, enc, float(ack.get("decrypt_s", 0.0)), response)


def run_uav_client(address, manifests, scheme=KemScheme.ML_KEM_512, rng=None, timeout: float = 30.0,
                   offered=None) -> TransferReport:
    """Connect, handshake, stream every manifest, then close cleanly."""
    scheme = KemScheme.parse(scheme)
    t0 = time.perf_counter()
    conn = _connect(tuple(address), timeout)
    try:
        session = channel.handshake_client(conn, scheme, rng, offered=offered, timeout=timeout)
        report = TransferReport(session.session_id, session.scheme.label, (time.perf_counter() - t0) * 1000)
        for m in manifests:
            if not isinstance(m, TransferManifest):
                m = TransferManifest.for_file(m)
            report.files.append(send_file(conn, session, m))
        channel.send_close(conn, CloseReason.NORMAL)
        session.close()
        report.connection_duration_s = time.perf_counter() - t0
        return report
    finally:
        conn.close()


# -- harness ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    passed: bool
    stage: str
    detail: str = ""
    error: BaseException | None = None
    report: TransferReport | None = None


def transfer_roundtrip_check(path, scheme=KemScheme.ML_KEM_512, storage_dir=None, *,
                             manifest: TransferManifest | None = None, seed: int | None = None) -> CheckResult:
    """Run server and client in-process over loopback and compare digests."""
    import tempfile

    path = Path(path)
    stage = "manifest"
    tmp = None
    try:
        manifest = manifest or TransferManifest.for_file(path)
        if storage_dir is None:
            tmp = tempfile.TemporaryDirectory(prefix="skylink-check-")
            storage_dir = tmp.name
        stage = "bind"
        rng = random.Random(seed) if seed is not None else None
        cfg = StationConfig(storage_dir=Path(storage_dir), max_sessions=2)
        with GroundStation(cfg, rng=random.Random(rng.getrandbits(64)) if rng else None) as station:
            stage = "transfer"
            report = run_uav_client(station.address, [manifest], scheme, rng=rng)
        stage = "verify"
        stored = Path(storage_dir) / report.session_id / path.name
        digest = hashlib.sha256(stored.read_bytes()).hexdigest()
        if digest != manifest.sha256:
            return CheckResult(False, stage, f"stored digest {digest} != {manifest.sha256}", report=report)
        return CheckResult(True, "done", f"{manifest.size} bytes in {report.files[0].chunks} chunks", report=report)
    except Exception as exc:
        return CheckResult(False, stage, f"{type(exc).__name__}: {exc}", error=exc)
    finally:
        if tmp is not None:
            tmp.cleanup()
