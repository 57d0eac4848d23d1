"""Accuracy / ROC-AUC evaluation and the four-experiment driver."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .. import trafficlab
from ..errors import SingleClassEval
from .features import FeatureMatrix, prepare
from .models import ModelKind, TrainedModel, score, train

REPORT_FIELDS = ("experiment", "model", "accuracy", "auc", "tp", "fp", "tn", "fn")
CURVE_FIELDS = ("experiment", "model", "fpr", "tpr")


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC from average ranks; ties earn half credit."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassEval("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) at every distinct score threshold, starting from (0, 0)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order] == 1
    cut = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp = np.cumsum(y)[cut]
    fp = np.cumsum(~y)[cut]
    n_pos, n_neg = max(int(y.sum()), 1), max(int((~y).sum()), 1)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def evaluate(model: TrainedModel, features: FeatureMatrix, threshold: float = 0.5,
             accuracy_only: bool = False) -> EvalReport:
    """Accuracy at ``score >= threshold`` plus AUC.

    A single-class test set is refused unless ``accuracy_only`` is set, in
    which case the AUC field is None.
    """
    y = np.asarray(features.y)
    if len(y) == 0:
        raise SingleClassEval("empty test set")
    p = score(model, features)
    single = np.unique(y).size < 2
    if single and not accuracy_only:
        raise SingleClassEval("test set contains a single class; AUC undefined")
    return report_from_scores(p, y, threshold, auc=None if single else roc_auc(p, y))


def report_from_scores(p, y, threshold=0.5, auc=None) -> EvalReport:
    pred = np.asarray(p) >= threshold
    truth = np.asarray(y) == 1
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    tn = int((~pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    return EvalReport((tp + tn) / len(truth), auc, tp, fp, tn, fn, threshold)


@dataclass
class ExperimentResult:
    experiment_id: int
    seed: int
    reports: dict = field(default_factory=dict)  # kind value -> EvalReport
    curves: dict = field(default_factory=dict)  # kind value -> (fpr, tpr)
    models: dict = field(default_factory=dict)


def run_experiment(experiment_id: int, kinds=("lr", "nb", "gbdt"), seed: int = 0,
                   separation: float = 1.0, hyperparameters: dict | None = None) -> ExperimentResult:
    config = trafficlab.preset(experiment_id, seed=seed, separation=separation)
    train_df, test_df = trafficlab.generate(config)
    train_fm = prepare(train_df)
    test_fm = prepare(test_df, train_fm.scaler)
    result = ExperimentResult(experiment_id, seed)
    for kind in kinds:
        kind = ModelKind.parse(kind)
        hp = (hyperparameters or {}).get(kind.value)
        model = train(kind, train_fm, hp)
        p = score(model, test_fm)
        result.reports[kind.value] = report_from_scores(p, test_fm.y, auc=roc_auc(p, test_fm.y))
        result.curves[kind.value] = roc_curve(p, test_fm.y)
        result.models[kind.value] = model
    return result


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_report_csv(results, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for res in results:
            for name, r in res.reports.items():
                auc = "" if r.auc is None else _fmt(r.auc)
                w.writerow([res.experiment_id, name, _fmt(r.accuracy), auc, r.tp, r.fp, r.tn, r.fn])
    return path


def write_curves_csv(results, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for res in results:
            for name, (fpr, tpr) in res.curves.items():
                for a, b in zip(fpr, tpr):
                    w.writerow([res.experiment_id, name, _fmt(a), _fmt(b)])
    return path


def format_results(results) -> str:
    lines = [f"{'experiment':>10}  {'model':<6}  {'accuracy':>8}  {'auc':>6}"]
    for res in results:
        for name, r in res.reports.items():
            auc = "n/a" if r.auc is None else f"{r.auc:.4f}"
            lines.append(f"{res.experiment_id:>10}  {name:<6}  {r.accuracy:>8.4f}  {auc:>6}")
    return "\n".join(lines)
