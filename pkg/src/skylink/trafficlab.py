"""Labeled synthetic UAV traffic for intrusion-detection experiments.

Clients and intruders are drawn from the same parametric family. The
intruder profile is the client profile moved by ``separation`` times a
fixed per-feature shift: log-normal locations move by a multiple of their
scale, the gamma shape and the message rate are scaled by
``1 + separation * shift``. ``separation = 0`` makes the classes identical.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import EmptyLog, UnknownExperiment

COLUMNS = (
    "timestamp_s",
    "entity_id",
    "message_size_bytes",
    "file_size_bytes",
    "connection_duration_s",
    "data_volume_bytes",
    "label",
)
FEATURES = ("message_size_bytes", "file_size_bytes", "connection_duration_s", "data_volume_bytes")

CLIENT, INTRUDER = 0, 1


@dataclass(frozen=True)
class TrafficRecord:
    timestamp_s: float
    entity_id: str
    message_size_bytes: int
    file_size_bytes: int
    connection_duration_s: float
    data_volume_bytes: int
    label: int

    def __post_init__(self):
        if self.label not in (CLIENT, INTRUDER):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        for name in ("timestamp_s",) + FEATURES:
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


def to_records(df: pd.DataFrame) -> list[TrafficRecord]:
    return [TrafficRecord(*row) for row in df[list(COLUMNS)].itertuples(index=False, name=None)]


def from_records(records) -> pd.DataFrame:
    return pd.DataFrame([dataclasses.astuple(r) for r in records], columns=list(COLUMNS))


@dataclass(frozen=True)
class BehaviorProfile:
    msg_mu: float
    msg_sigma: float
    file_mu: float
    file_sigma: float
    vol_mu: float
    vol_sigma: float
    dur_shape: float
    dur_scale: float
    rate: float  # messages per second while active

    def __post_init__(self):
        for name in ("msg_sigma", "file_sigma", "vol_sigma", "dur_shape", "dur_scale", "rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


CLIENT_PROFILE = BehaviorProfile(
    msg_mu=np.log(1200.0), msg_sigma=0.45,
    file_mu=np.log(2.0e6), file_sigma=0.70,
    vol_mu=np.log(4.0e5), vol_sigma=0.55,
    dur_shape=4.0, dur_scale=0.5,
    rate=2.0,
)

# per unit of separation: location shifts in units of the feature's log-scale,
# relative change for gamma shape and rate
INTRUDER_SHIFT = {
    "msg": 1.8,
    "file": -1.6,
    "vol": 1.7,
    "dur_shape": 1.0,
    "rate": 1.0,
}


def intruder_profile(separation: float, base: BehaviorProfile = CLIENT_PROFILE) -> BehaviorProfile:
    if separation < 0:
        raise ValueError("separation must be >= 0")
    s = separation
    return dataclasses.replace(
        base,
        msg_mu=base.msg_mu + s * INTRUDER_SHIFT["msg"] * base.msg_sigma,
        file_mu=base.file_mu + s * INTRUDER_SHIFT["file"] * base.file_sigma,
        vol_mu=base.vol_mu + s * INTRUDER_SHIFT["vol"] * base.vol_sigma,
        dur_shape=base.dur_shape * (1 + s * INTRUDER_SHIFT["dur_shape"]),
        rate=base.rate * (1 + s * INTRUDER_SHIFT["rate"]),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: int
    train_size: int
    train_ratio: float  # client fraction
    test_size: int
    test_ratio: float
    per_second_sampling: bool
    seed: int = 0
    separation: float = 1.0

    def __post_init__(self):
        for name in ("train_ratio", "test_ratio"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be a client fraction in (0, 1)")
        if self.train_size < 100 or self.test_size < 100:
            raise ValueError("dataset sizes must be >= 100")
        if not self.separation >= 0:
            raise ValueError("separation must be >= 0")


_PRESETS = {
    1: dict(train_size=27_000, train_ratio=0.60, test_size=9_000, test_ratio=0.70, per_second_sampling=True),
    2: dict(train_size=27_000, train_ratio=0.60, test_size=9_000, test_ratio=0.93, per_second_sampling=True),
    3: dict(train_size=200_000, train_ratio=0.70, test_size=60_000, test_ratio=0.70, per_second_sampling=False),
    4: dict(train_size=200_000, train_ratio=0.70, test_size=60_000, test_ratio=0.93, per_second_sampling=False),
}


def preset(experiment_id: int, seed: int = 0, separation: float = 1.0) -> ExperimentConfig:
    if experiment_id not in _PRESETS:
        raise UnknownExperiment(f"experiment must be in range 1-4, got {experiment_id}")
    return ExperimentConfig(experiment_id, seed=seed, separation=separation, **_PRESETS[experiment_id])


# -- event generation --------------------------------------------------------------

def _draw_features(rng: np.random.Generator, p: BehaviorProfile, n: int) -> dict:
    return {
        "message_size_bytes": np.rint(rng.lognormal(p.msg_mu, p.msg_sigma, n)).astype(np.int64),
        "file_size_bytes": np.rint(rng.lognormal(p.file_mu, p.file_sigma, n)).astype(np.int64),
        "connection_duration_s": rng.gamma(p.dur_shape, p.dur_scale, n),
        "data_volume_bytes": np.rint(rng.lognormal(p.vol_mu, p.vol_sigma, n)).astype(np.int64),
    }


def _split_entities(rng, n_units: int, per_entity: int) -> np.ndarray:
    """Entity index per unit, units grouped contiguously per entity."""
    n_entities = max(1, -(-n_units // per_entity))
    sizes = np.full(n_entities, n_units // n_entities)
    sizes[: n_units % n_entities] += 1
    return np.repeat(np.arange(n_entities), sizes)


def raw_events(rng: np.random.Generator, profile: BehaviorProfile, n_buckets: int, label: int,
               per_second: bool, span_s: float = 86_400.0, per_entity: int = 60) -> pd.DataFrame:
    """Raw per-message events.

    With ``per_second`` the events are laid out so that they fall into
    exactly ``n_buckets`` distinct (entity, second) cells; otherwise there is
    one event per bucket.
    """
    ent = _split_entities(rng, n_buckets, per_entity)
    n_entities = ent.max() + 1
    starts = np.floor(rng.uniform(0, span_s, n_entities))
    # offset of each unit inside its entity's activity window
    first = np.searchsorted(ent, np.arange(n_entities))
    offset = np.arange(n_buckets) - first[ent]
    if per_second:
        seconds = starts[ent] + offset
        k = 1 + rng.poisson(max(profile.rate - 1.0, 0.0), n_buckets)
        bucket = np.repeat(np.arange(n_buckets), k)
        ts = seconds[bucket] + rng.uniform(0.0, 0.999, bucket.size)
        ent_ev = ent[bucket]
    else:
        gaps = rng.exponential(1.0 / profile.rate, n_buckets)
        # cumulative time inside each entity's window
        cum = np.cumsum(gaps)
        base = np.concatenate([[0.0], cum])[first][ent]
        ts = starts[ent] + cum - base
        ent_ev = ent
    n_ev = ts.size
    df = pd.DataFrame({"timestamp_s": ts, "entity": ent_ev, **_draw_features(rng, profile, n_ev)})
    df["label"] = label
    return df


def aggregate_per_second(events: pd.DataFrame, entity_col: str = "entity") -> pd.DataFrame:
    """Collapse events into one record per (entity, whole second).

    Volume is summed, duration and file size take the maximum, message
    size the (rounded) mean.
    """
    sec = np.floor(events["timestamp_s"]).astype(np.int64)
    grouped = events.assign(_sec=sec).groupby([entity_col, "_sec"], sort=True)
    out = grouped.agg(
        message_size_bytes=("message_size_bytes", "mean"),
        file_size_bytes=("file_size_bytes", "max"),
        connection_duration_s=("connection_duration_s", "max"),
        data_volume_bytes=("data_volume_bytes", "sum"),
        label=("label", "first"),
    ).reset_index()
    out["message_size_bytes"] = np.rint(out["message_size_bytes"]).astype(np.int64)
    out = out.rename(columns={"_sec": "timestamp_s"})
    out["timestamp_s"] = out["timestamp_s"].astype(float)
    return out


def _make_split(rng: np.random.Generator, size: int, client_frac: float, per_second: bool,
                separation: float) -> pd.DataFrame:
    n_client = int(round(size * client_frac))
    n_intr = size - n_client
    parts = []
    for label, n, prof in (
        (CLIENT, n_client, CLIENT_PROFILE),
        (INTRUDER, n_intr, intruder_profile(separation)),
    ):
        ev = raw_events(rng, prof, n, label, per_second)
        ev["entity"] = ev["entity"] + (0 if label == CLIENT else 1_000_000)
        parts.append(aggregate_per_second(ev) if per_second else ev)
    df = pd.concat(parts, ignore_index=True)
    # neutral entity ids: a random relabelling so ids carry no class information
    uniq = np.unique(df["entity"].to_numpy())
    codes = rng.permutation(len(uniq))
    lookup = dict(zip(uniq.tolist(), codes.tolist()))
    df["entity_id"] = [f"uav-{lookup[e]:05d}" for e in df["entity"].tolist()]
    df = df.sort_values(["timestamp_s", "entity_id"], kind="mergesort").reset_index(drop=True)
    return df[list(COLUMNS)]


def generate(config: ExperimentConfig) -> tuple[pd.DataFrame, pd.DataFrame]:
    """(train, test) datasets for a configuration; deterministic under its seed."""
    ss_train, ss_test = np.random.SeedSequence([config.seed, config.experiment_id]).spawn(2)
    train = _make_split(np.random.default_rng(ss_train), config.train_size, config.train_ratio,
                        config.per_second_sampling, config.separation)
    test = _make_split(np.random.default_rng(ss_test), config.test_size, config.test_ratio,
                       config.per_second_sampling, config.separation)
    return train, test


# -- CSV ------------------------------------------------------------------------------

def write_csv(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    df[list(COLUMNS)].to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    return path


def read_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"entity_id": str})
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"dataset {path} lacks columns {missing}")
    return df[list(COLUMNS)]


def write_experiment(config: ExperimentConfig, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = generate(config)
    return write_csv(train, out / "train.csv"), write_csv(test, out / "test.csv")


# -- live runs ----------------------------------------------------------------------

def log_from_live_run(rows, per_second: bool = False) -> pd.DataFrame:
    """Turn a ground-station frame log into client-labelled traffic records.

    ``rows`` is an iterable of dicts (``TrafficLog.rows``) or a DataFrame.
    Each frame becomes one record: its wire size is the data volume, the
    payload size the message size, and the connection duration is the
    time since the session's first logged frame.
    """
    df = rows.copy() if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    if df.empty:
        raise EmptyLog("traffic log has no frames")
    t0 = df["timestamp_s"].min()
    first_seen = df.groupby("session_id")["timestamp_s"].transform("min")
    out = pd.DataFrame({
        "timestamp_s": df["timestamp_s"] - t0,
        "entity_id": df["session_id"].astype(str),
        "message_size_bytes": df["payload_bytes"].fillna(0).astype(np.int64),
        "file_size_bytes": df["file_size"].fillna(0).astype(np.int64),
        "connection_duration_s": df["timestamp_s"] - first_seen,
        "data_volume_bytes": df["wire_bytes"].astype(np.int64),
        "label": CLIENT,
    })
    if per_second:
        out = aggregate_per_second(out, entity_col="entity_id")
    return out[list(COLUMNS)].reset_index(drop=True)


def merge_datasets(*frames: pd.DataFrame, sort: bool = True) -> pd.DataFrame:
    df = pd.concat([f[list(COLUMNS)] for f in frames], ignore_index=True)
    if sort:
        df = df.sort_values(["timestamp_s", "entity_id"], kind="mergesort").reset_index(drop=True)
    return df
