import csv
import threading
import time

import pytest

from skylink import telemetry
from skylink.telemetry import (
    CSV_FIELDS,
    MetricRecord,
    MetricsSink,
    ResourceSampler,
    RunClock,
    comparison_rows,
    comparison_table,
    export_metrics_csv,
    read_metrics_csv,
    time_section,
)

HEADER = (
    "run_id,scheme,environment,handshake_time_ms,encryption_time_s,decryption_time_s,"
    "connection_duration_s,server_response_time_s,cpu_usage_percent,memory_usage_mb,timestamp"
)


def record(run_id="r1", scheme="ecdh", env="loopback", cpu=12.5, mem=80.0, base=1.0):
    return MetricRecord(run_id, scheme, env, 10.0 * base, 0.01 * base, 0.02 * base, 1.5 * base, 0.03 * base,
                        cpu, mem, "2026-01-01T00:00:00.000+00:00")


def test_empty_region_is_fast():
    elapsed, result = time_section("noop", lambda: 42)
    assert result == 42 and 0 <= elapsed < 1e-3


def test_sleep_region_within_tolerance():
    elapsed, _ = time_section("sleep", time.sleep, 0.05)
    assert 0.050 <= elapsed <= 0.150


def test_nested_sections():
    clock = RunClock("run")
    with clock.section("outer") as outer:
        with clock.section("inner") as inner:
            time.sleep(0.01)
    assert outer.elapsed >= inner.elapsed > 0
    assert clock.total("outer") >= clock.total("inner")
    assert clock.counts["inner"] == 1 and clock.total("missing") == 0.0


def test_time_section_charges_clock():
    clock = RunClock("r")
    time_section("enc", sum, [1, 2], clock=clock)
    time_section("enc", sum, [1, 2], clock=clock)
    assert clock.counts["enc"] == 2


def test_record_validation():
    with pytest.raises(ValueError):
        MetricRecord("r", "ecdh", "x", -1.0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        MetricRecord("r", "ecdh", "x", 1.0, 0, 0, 0, 0, cpu_usage_percent=-3)
    with pytest.raises(ValueError):
        MetricRecord("r", "ecdh", "x", 1.0, 0, 0, 0, 0, memory_usage_mb=0)
    assert MetricRecord("r", "ecdh", "x", 1.0, 0, 0, 0, 0).timestamp


def test_export_header_and_single_row(tmp_path):
    path = export_metrics_csv([record()], tmp_path / "m.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[0] == HEADER
    assert ",".join(CSV_FIELDS) == HEADER


def test_export_roundtrip_with_absent_resources(tmp_path):
    recs = [record(), record("r2", cpu=None, mem=None), record("r,3", scheme="ml-kem-512")]
    path = export_metrics_csv(recs, tmp_path / "m.csv")
    assert read_metrics_csv(path) == recs
    rows = list(csv.reader(path.open()))
    assert rows[2][8] == "" and rows[2][9] == ""
    assert rows[3][0] == "r,3"  # quoted per RFC 4180


def test_export_requires_records(tmp_path):
    with pytest.raises(ValueError):
        export_metrics_csv([], tmp_path / "m.csv")


def test_read_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_metrics_csv(p)


def test_idle_sampler():
    with ResourceSampler(interval_ms=20) as s:
        time.sleep(0.3)
    summary = s.summary
    assert summary.samples >= 5
    assert summary.memory_mb > 0
    assert summary.cpu_percent < 5.0


def test_degenerate_sampler_window():
    s = ResourceSampler(interval_ms=200).start()
    summary = s.stop()
    assert summary.cpu_percent is None and summary.memory_mb is None and summary.samples == 0


def test_short_window_takes_closing_sample():
    s = ResourceSampler(interval_ms=1000, min_window_ms=10).start()
    time.sleep(0.03)
    summary = s.stop()
    assert summary.samples == 1 and summary.memory_mb > 0


def test_sink_is_thread_safe():
    sink = MetricsSink()

    def work(i):
        for j in range(100):
            sink.append(record(f"{i}-{j}"))

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(sink) == 800 and len({r.run_id for r in sink.records}) == 800


def test_group_means_skip_absent_values():
    means = telemetry.group_means([record(cpu=10.0), record(cpu=None), record(cpu=30.0)])
    cell = means[("ecdh", "loopback")]
    assert cell["cpu_usage_percent"] == 20.0 and cell["runs"] == 3


def test_comparison_grid_matches_two_by_two_layout():
    recs = [
        record(s, scheme=s, env=e, base=b)
        for s in ("ecdh", "ml-kem-512")
        for e in ("5G", "VPN")
        for b in (1.0, 3.0)
    ]
    rows = comparison_rows(recs)
    assert len(rows) == 7 * 2
    assert [r["parameter"] for r in rows[::2]] == [label for _, label in telemetry.PARAMETERS]
    assert {r["environment"] for r in rows} == {"5G", "VPN"}
    assert set(rows[0]) == {"parameter", "environment", "ECC", "CRYSTALS-Kyber"}
    assert rows[0]["ECC"] == pytest.approx(20.0)
    table = comparison_table(recs)
    assert "CRYSTALS-Kyber" in table and "Memory Usage (MB)" in table


def test_comparison_marks_missing_cells():
    table = comparison_table([record(cpu=None, mem=None)])
    assert "n/a" in table
