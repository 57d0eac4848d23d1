"""Run timing, process resource sampling and the benchmark CSV / comparison report."""

from __future__ import annotations

import contextlib
import csv
import datetime as _dt
import logging
import math
import os
import threading
import time
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

CSV_FIELDS = (
    "run_id",
    "scheme",
    "environment",
    "handshake_time_ms",
    "encryption_time_s",
    "decryption_time_s",
    "connection_duration_s",
    "server_response_time_s",
    "cpu_usage_percent",
    "memory_usage_mb",
    "timestamp",
)

# (column, label shown in the comparison report)
PARAMETERS = (
    ("handshake_time_ms", "Handshake Time (ms)"),
    ("encryption_time_s", "Encryption Time (s)"),
    ("decryption_time_s", "Decryption Time (s)"),
    ("connection_duration_s", "Connection Duration (s)"),
    ("server_response_time_s", "Server Response Time (s)"),
    ("cpu_usage_percent", "CPU Usage (%)"),
    ("memory_usage_mb", "Memory Usage (MB)"),
)

_TIMING_FIELDS = PARAMETERS[:5]


@dataclass
class MetricRecord:
    run_id: str
    scheme: str
    environment: str
    handshake_time_ms: float
    encryption_time_s: float
    decryption_time_s: float
    connection_duration_s: float
    server_response_time_s: float
    cpu_usage_percent: float | None = None
    memory_usage_mb: float | None = None
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")
        for name, _ in _TIMING_FIELDS:
            value = getattr(self, name)
            if value is None or not value >= 0:
                raise ValueError(f"{name} must be a non-negative number, got {value!r}")
        if self.cpu_usage_percent is not None:
            if not 0 <= self.cpu_usage_percent <= 100 * (os.cpu_count() or 1):
                raise ValueError(f"cpu_usage_percent out of range: {self.cpu_usage_percent}")
        if self.memory_usage_mb is not None and not self.memory_usage_mb > 0:
            raise ValueError("memory_usage_mb must be positive when present")

    def as_row(self) -> dict:
        row = asdict(self)
        return {k: "" if row[k] is None else row[k] for k in CSV_FIELDS}


# -- timing --------------------------------------------------------------------

class Timing:
    __slots__ = ("label", "start", "elapsed")

    def __init__(self, label):
        self.label = label
        self.start = 0.0
        self.elapsed = 0.0


class RunClock:
    """Accumulates monotonic-clock durations per label for one run.

    Sections may nest; each section adds its own elapsed time to its label.
    """

    def __init__(self, run_id: str):
        self.run_id = run_id
        self.totals: dict[str, float] = defaultdict(float)
        self.counts: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    @contextlib.contextmanager
    def section(self, label: str):
        t = Timing(label)
        t.start = time.perf_counter()
        try:
            yield t
        finally:
            t.elapsed = time.perf_counter() - t.start
            self.add(label, t.elapsed)

    def add(self, label: str, seconds: float) -> None:
        with self._lock:
            self.totals[label] += seconds
            self.counts[label] += 1

    def total(self, label: str) -> float:
        return self.totals.get(label, 0.0)


def time_section(label: str, fn, *args, clock: RunClock | None = None, **kwargs):
    """Call ``fn`` and return ``(elapsed_seconds, result)``; optionally charge a clock."""
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    elapsed = time.perf_counter() - start
    if clock is not None:
        clock.add(label, elapsed)
    return elapsed, result


# -- resources ---------------------------------------------------------------------

@dataclass(frozen=True)
class ResourceSummary:
    cpu_percent: float | None
    memory_mb: float | None
    samples: int


class ResourceSampler:
    """Samples this process's CPU percent and RSS on a background thread.

    ``stop()`` returns arithmetic means. A window shorter than
    ``min_window_ms`` with no interval samples reports absent values.
    """

    def __init__(self, interval_ms: float = 200.0, min_window_ms: float = 10.0):
        self.interval = interval_ms / 1000.0
        self.min_window = min_window_ms / 1000.0
        self._cpu: list[float] = []
        self._mem: list[float] = []
        self._stop = threading.Event()
        self._thread = None
        self._proc = None
        self._started = 0.0

    def _sample(self):
        self._cpu.append(self._proc.cpu_percent(interval=None))
        self._mem.append(self._proc.memory_info().rss / (1024 * 1024))

    def _loop(self):
        while not self._stop.wait(self.interval):
            try:
                self._sample()
            except Exception:  # process stats may vanish on exotic platforms
                log.debug("resource sample failed", exc_info=True)
                return

    def start(self) -> ResourceSampler:
        try:
            import psutil

            self._proc = psutil.Process()
            self._proc.cpu_percent(interval=None)  # primes the counter
        except Exception as exc:
            log.info("resource sampling unavailable: %s", exc)
            self._proc = None
            return self
        self._started = time.perf_counter()
        self._thread = threading.Thread(target=self._loop, name="resource-sampler", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> ResourceSummary:
        if self._proc is None:
            return ResourceSummary(None, None, 0)
        self._stop.set()
        self._thread.join()
        if not self._cpu and time.perf_counter() - self._started >= self.min_window:
            with contextlib.suppress(Exception):
                self._sample()
        if not self._cpu:
            return ResourceSummary(None, None, 0)
        return ResourceSummary(
            sum(self._cpu) / len(self._cpu),
            sum(self._mem) / len(self._mem),
            len(self._cpu),
        )

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.summary = self.stop()
        return False


def sample_resources(interval_ms: float = 200.0) -> ResourceSampler:
    return ResourceSampler(interval_ms).start()


# -- sink and CSV ---------------------------------------------------------------------

class MetricsSink:
    """Thread-safe, append-only collection of MetricRecords."""

    def __init__(self):
        self._records: list[MetricRecord] = []
        self._lock = threading.Lock()

    def append(self, record: MetricRecord) -> None:
        with self._lock:
            self._records.append(record)

    @property
    def records(self) -> list[MetricRecord]:
        with self._lock:
            return list(self._records)

    def __len__(self):
        with self._lock:
            return len(self._records)


def export_metrics_csv(records: Iterable[MetricRecord], path) -> Path:
    records = list(records)
    if not records:
        raise ValueError("no metric records to export")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.as_row())
    return path


def _opt_float(text: str):
    return None if text == "" else float(text)


def read_metrics_csv(path) -> list[MetricRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"unexpected metrics header: {reader.fieldnames}")
        for row in reader:
            kwargs = {}
            for name in CSV_FIELDS:
                value = row[name]
                if name in ("run_id", "scheme", "environment", "timestamp"):
                    kwargs[name] = value
                elif name in ("cpu_usage_percent", "memory_usage_mb"):
                    kwargs[name] = _opt_float(value)
                else:
                    kwargs[name] = float(value)
            out.append(MetricRecord(**kwargs))
    return out


def group_means(records: Iterable[MetricRecord]) -> dict[tuple[str, str], dict[str, float | None]]:
    """Mean of every parameter per (scheme, environment); absent values are skipped."""
    buckets = defaultdict(list)
    for rec in records:
        buckets[(rec.scheme, rec.environment)].append(rec)
    out = {}
    for key, recs in buckets.items():
        means = {}
        for name, _ in PARAMETERS:
            vals = [getattr(r, name) for r in recs if getattr(r, name) is not None]
            means[name] = sum(vals) / len(vals) if vals else None
        means["runs"] = len(recs)
        out[key] = means
    return out


_SCHEME_TITLES = {"ecdh": "ECC", "ml-kem-512": "CRYSTALS-Kyber"}


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.6g}"


def comparison_rows(records: Iterable[MetricRecord]) -> list[dict]:
    """Parameter x environment rows with one column per scheme (means over runs)."""
    means = group_means(records)
    schemes = sorted({s for s, _ in means}, key=lambda s: (s not in _SCHEME_TITLES, s))
    envs = sorted({e for _, e in means})
    rows = []
    for name, title in PARAMETERS:
        for env in envs:
            row = {"parameter": title, "environment": env}
            for s in schemes:
                cell = means.get((s, env))
                row[_SCHEME_TITLES.get(s, s)] = None if cell is None else cell[name]
            rows.append(row)
    return rows


def comparison_table(records: Iterable[MetricRecord]) -> str:
    rows = comparison_rows(records)
    if not rows:
        return ""
    cols = list(rows[0].keys())
    cells = [[r[c] if c in ("parameter", "environment") else _fmt(r[c]) for c in cols] for r in rows]
    headers = ["Parameter", "Environment"] + cols[2:]
    widths = [max(len(str(x)) for x in col) for col in zip(headers, *cells)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    out = [line, "-" * len(line)]
    for row in cells:
        out.append("  ".join(str(x).ljust(w) for x, w in zip(row, widths)))
    return "\n".join(out)
