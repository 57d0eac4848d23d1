"""Command-line entry point: ``skylink <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import random
import sys
import tempfile
import threading
import uuid
from pathlib import Path

from . import station as st
from . import telemetry, trafficlab
from .errors import SkylinkError
from .kem import KemScheme

log = logging.getLogger("skylink")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
SCHEME_CHOICES = ("ecdh", "ml-kem-512")
MODEL_CHOICES = ("lr", "nb", "gbdt")


# -- argument types -----------------------------------------------------------------

def experiment_id(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid experiment {text!r}: must be an integer in range 1-4")
    if not 1 <= value <= 4:
        raise argparse.ArgumentTypeError(f"invalid experiment {value}: valid range 1-4")
    return value


def seed_value(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}")
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", text
    try:
        port_num = int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid address {text!r}; expected host:port")
    if not 0 <= port_num <= 65535:
        raise argparse.ArgumentTypeError(f"port out of range in {text!r}")
    return host.strip("[]") or "127.0.0.1", port_num


def model_list(text: str) -> list[str]:
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in MODEL_CHOICES]
    if not names or bad:
        raise argparse.ArgumentTypeError(f"models must be a comma list drawn from {','.join(MODEL_CHOICES)}")
    return list(dict.fromkeys(names))


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=seed_value, default=None, help="u64 seed for deterministic runs")

    p = argparse.ArgumentParser(prog="skylink", description="Secure UAV link, benchmarks and IDS experiments.")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")

    s = sub.add_parser("serve", parents=[shared], help="run a ground station")
    s.add_argument("--listen", type=address, default=("127.0.0.1", 9400), help="host:port (default 127.0.0.1:9400)")
    s.add_argument("--storage", type=Path, required=True, help="directory for received files")
    s.add_argument("--max-sessions", type=positive_int, default=8)
    s.add_argument("--scheme", choices=SCHEME_CHOICES, action="append",
                   help="allowed KEM (repeatable; default both)")
    s.add_argument("--timeout", type=non_negative_float, default=30.0, help="per-connection timeout (s)")
    s.add_argument("--out", type=Path, help="metrics CSV written on shutdown")
    s.add_argument("--traffic-out", type=Path, help="per-frame traffic log CSV written on shutdown")
    s.add_argument("--environment", default="loopback", help="environment label for metric rows")

    s = sub.add_parser("send", parents=[shared], help="send files to a ground station")
    s.add_argument("--connect", type=address, required=True, help="host:port")
    s.add_argument("--file", type=Path, action="append", required=True, help="file to send (repeatable)")
    s.add_argument("--scheme", choices=SCHEME_CHOICES, default="ml-kem-512")
    s.add_argument("--timeout", type=non_negative_float, default=30.0)
    s.add_argument("--out", type=Path, help="write a one-row metrics CSV here")
    s.add_argument("--environment", default="loopback")

    s = sub.add_parser("bench", parents=[shared], help="benchmark KEM schemes over a loopback transfer")
    s.add_argument("--runs", type=positive_int, default=3)
    s.add_argument("--file", type=Path, help="payload file (default: 1 MiB of seeded random bytes)")
    s.add_argument("--scheme", choices=SCHEME_CHOICES, action="append", help="scheme (repeatable; default both)")
    s.add_argument("--connect", type=address, help="benchmark against a remote station instead of in-process")
    s.add_argument("--environment", default="loopback")
    s.add_argument("--out", type=Path, help="metrics CSV path (default: CSV on stdout)")

    s = sub.add_parser("gen-dataset", parents=[shared], help="write train.csv and test.csv for an experiment")
    s.add_argument("--experiment", type=experiment_id, required=True, help="experiment id, range 1-4")
    s.add_argument("--separation", type=non_negative_float, default=1.0)
    s.add_argument("--out", type=Path, required=True, help="output directory")

    s = sub.add_parser("ids-train", parents=[shared], help="train one IDS model on a dataset CSV")
    s.add_argument("--model", choices=MODEL_CHOICES, required=True)
    s.add_argument("--train", type=Path, required=True)
    s.add_argument("--model-out", type=Path, required=True)

    s = sub.add_parser("ids-eval", parents=[shared], help="evaluate a saved model on a dataset CSV")
    s.add_argument("--model-in", type=Path, required=True)
    s.add_argument("--test", type=Path, required=True)
    s.add_argument("--accuracy-only", action="store_true", help="allow single-class test sets (no AUC)")
    s.add_argument("--out", type=Path, help="report CSV")

    s = sub.add_parser("ids-experiment", parents=[shared], help="run IDS experiments end to end")
    s.add_argument("--experiment", type=experiment_id, action="append",
                   help="experiment id, range 1-4 (repeatable; default all)")
    s.add_argument("--models", type=model_list, default=list(MODEL_CHOICES), help="comma list, e.g. lr,nb,gbdt")
    s.add_argument("--separation", type=non_negative_float, default=1.0)
    s.add_argument("--out", type=Path, help="directory for report.csv and roc.csv")

    s = sub.add_parser("report", help="grouped comparison table from a metrics CSV")
    s.add_argument("--metrics", type=Path, required=True)
    s.add_argument("--out", type=Path, help="also write the table here")
    return p


# -- commands ---------------------------------------------------------------------------

def _rng(seed):
    return None if seed is None else random.Random(seed)


def cmd_serve(args) -> int:
    schemes = args.scheme or list(SCHEME_CHOICES)
    cfg = st.StationConfig(
        host=args.listen[0], port=args.listen[1],
        allowed_schemes=tuple(schemes), preferred_scheme=schemes[0],
        storage_dir=args.storage, timeout_s=args.timeout or 30.0,
        max_sessions=args.max_sessions, environment=args.environment,
    )
    station = st.GroundStation(cfg, rng=_rng(args.seed))
    stop = threading.Event()
    station.start()
    print(f"listening on {station.address[0]}:{station.address[1]}", flush=True)
    try:
        stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        station.shutdown()
        if args.out and len(station.metrics):
            telemetry.export_metrics_csv(station.metrics.records, args.out)
        if args.traffic_out and len(station.traffic):
            station.traffic.write_csv(args.traffic_out)
    return 0


def cmd_send(args) -> int:
    manifests = [st.TransferManifest.for_file(p) for p in args.file]
    with telemetry.ResourceSampler() as sampler:
        report = st.run_uav_client(args.connect, manifests, args.scheme, rng=_rng(args.seed),
                                   timeout=args.timeout or 30.0)
    for f in report.files:
        print(f"{f.name}: {f.bytes} bytes in {f.chunks} chunks, ack after {f.response_time_s:.4f} s")
    if args.out:
        rec = report.to_metric_record(report.session_id, args.environment,
                                      sampler.summary.cpu_percent, sampler.summary.memory_mb)
        telemetry.export_metrics_csv([rec], args.out)
    return 0


def bench_runs(schemes, runs: int, payload: Path, environment: str = "loopback", seed=None,
               connect=None, storage_dir=None) -> list[telemetry.MetricRecord]:
    """One MetricRecord per (scheme, run): client-side view of a single-file transfer."""
    rng = _rng(seed)
    manifest = st.TransferManifest.for_file(payload)
    records = []
    for scheme in schemes:
        scheme = KemScheme.parse(scheme)
        for i in range(runs):
            run_rng = random.Random(rng.getrandbits(64)) if rng else None
            run_id = f"{scheme.label}-{i + 1}" if rng else f"{scheme.label}-{uuid.uuid4().hex[:8]}"
            with telemetry.ResourceSampler() as sampler:
                if connect is not None:
                    report = st.run_uav_client(connect, [manifest], scheme, rng=run_rng)
                else:
                    cfg = st.StationConfig(storage_dir=Path(storage_dir), max_sessions=2)
                    with st.GroundStation(cfg) as station:
                        report = st.run_uav_client(station.address, [manifest], scheme, rng=run_rng)
            records.append(report.to_metric_record(run_id, environment, sampler.summary.cpu_percent,
                                                   sampler.summary.memory_mb))
            log.info("%s run %d: handshake %.2f ms", scheme.label, i + 1, report.handshake_time_ms)
    return records


def cmd_bench(args) -> int:
    schemes = args.scheme or list(SCHEME_CHOICES)
    with tempfile.TemporaryDirectory(prefix="skylink-bench-") as tmp:
        payload = args.file
        if payload is None:
            payload = Path(tmp) / "payload.bin"
            payload.write_bytes(random.Random(args.seed or 0).randbytes(1 << 20))
        records = bench_runs(schemes, args.runs, payload, args.environment, args.seed, args.connect,
                             storage_dir=Path(tmp) / "storage")
    table = telemetry.comparison_table(records)
    if args.out:
        telemetry.export_metrics_csv(records, args.out)
        print(table)
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=telemetry.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in records:
            writer.writerow(r.as_row())
        sys.stdout.write(buf.getvalue())
        print(table, file=sys.stderr)
    return 0


def cmd_gen_dataset(args) -> int:
    cfg = trafficlab.preset(args.experiment, seed=args.seed or 0, separation=args.separation)
    train_path, test_path = trafficlab.write_experiment(cfg, args.out)
    print(f"wrote {train_path} and {test_path}")
    return 0


def cmd_ids_train(args) -> int:
    from . import ids

    fm = ids.prepare(trafficlab.read_csv(args.train))
    model = ids.train(args.model, fm)
    ids.save_model(model, args.model_out)
    print(f"trained {args.model} on {len(fm)} rows -> {args.model_out}")
    return 0


def cmd_ids_eval(args) -> int:
    from . import ids

    model = ids.load_model(args.model_in)
    if model.scaler is None:
        raise SkylinkError("model file carries no feature scaler")
    fm = ids.prepare(trafficlab.read_csv(args.test), model.scaler)
    rep = ids.evaluate(model, fm, accuracy_only=args.accuracy_only)
    auc = "n/a" if rep.auc is None else f"{rep.auc:.4f}"
    print(f"accuracy {rep.accuracy:.4f}  auc {auc}  tp {rep.tp} fp {rep.fp} tn {rep.tn} fn {rep.fn}")
    if args.out:
        result = ids.ExperimentResult(0, args.seed or 0, {model.kind.value: rep})
        ids.write_report_csv([result], args.out)
    return 0


def cmd_ids_experiment(args) -> int:
    from . import ids

    results = []
    for e in args.experiment or [1, 2, 3, 4]:
        results.append(ids.run_experiment(e, args.models, seed=args.seed or 0, separation=args.separation))
    print(ids.format_results(results))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        ids.write_report_csv(results, args.out / "report.csv")
        ids.write_curves_csv(results, args.out / "roc.csv")
    return 0


def cmd_report(args) -> int:
    table = telemetry.comparison_table(telemetry.read_metrics_csv(args.metrics))
    print(table)
    if args.out:
        args.out.write_text(table + "\n")
    return 0


COMMANDS = {
    "serve": cmd_serve,
    "send": cmd_send,
    "bench": cmd_bench,
    "gen-dataset": cmd_gen_dataset,
    "ids-train": cmd_ids_train,
    "ids-eval": cmd_ids_eval,
    "ids-experiment": cmd_ids_experiment,
    "report": cmd_report,
}


def configure_logging() -> None:
    name = os.environ.get("SKYLINK_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name, logging.ERROR)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if name not in LOG_LEVELS:
        log.error("ignoring SKYLINK_LOG=%r (expected error, info or debug)", name)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors 2
        return int(exc.code or 0)
    configure_logging()
    try:
        return COMMANDS[args.command](args)
    except (SkylinkError, OSError, ValueError) as exc:
        print(f"skylink: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
