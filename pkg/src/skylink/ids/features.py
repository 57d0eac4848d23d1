"""Feature preparation: log1p on byte counts, then z-scores with training statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import EmptyDataset, SingleClassTraining
from ..trafficlab import FEATURES

LOG_FEATURES = ("message_size_bytes", "file_size_bytes", "data_volume_bytes")
STD_FLOOR = 1e-9


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, raw: np.ndarray) -> Standardizer:
        return cls(raw.mean(axis=0), np.maximum(raw.std(axis=0), STD_FLOOR))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    scaler: Standardizer

    def __len__(self):
        return len(self.y)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.y)


def raw_features(dataset: pd.DataFrame) -> np.ndarray:
    X = dataset[list(FEATURES)].to_numpy(dtype=float)
    for j, name in enumerate(FEATURES):
        if name in LOG_FEATURES:
            X[:, j] = np.log1p(X[:, j])
    return X


def prepare(dataset: pd.DataFrame, scaler: Standardizer | None = None) -> FeatureMatrix:
    """Build a feature matrix.

    Without ``scaler`` the dataset is treated as training data: its own
    statistics are fitted and a single-class label set is refused. Test data
    must be passed the training scaler.
    """
    if dataset is None or len(dataset) == 0:
        raise EmptyDataset("dataset has no rows")
    X = raw_features(dataset)
    if not np.isfinite(X).all():
        raise ValueError("dataset contains missing or non-finite feature values")
    y = dataset["label"].to_numpy(dtype=np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if scaler is None:
        if np.unique(y).size < 2:
            raise SingleClassTraining("training data contains a single class")
        scaler = Standardizer.fit(X)
    return FeatureMatrix(scaler.apply(X), y, scaler)
