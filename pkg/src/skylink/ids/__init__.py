"""Intrusion detection over trafficlab datasets."""

from .evaluation import (
    EvalReport,
    ExperimentResult,
    evaluate,
    format_results,
    report_from_scores,
    roc_auc,
    roc_curve,
    run_experiment,
    write_curves_csv,
    write_report_csv,
)
from .features import FeatureMatrix, Standardizer, prepare
from .models import (
    GBDTParams,
    LRParams,
    ModelKind,
    NBParams,
    TrainedModel,
    load_model,
    save_model,
    score,
    train,
)

__all__ = [
    "EvalReport",
    "ExperimentResult",
    "FeatureMatrix",
    "GBDTParams",
    "LRParams",
    "ModelKind",
    "NBParams",
    "Standardizer",
    "TrainedModel",
    "evaluate",
    "format_results",
    "load_model",
    "prepare",
    "report_from_scores",
    "roc_auc",
    "roc_curve",
    "run_experiment",
    "save_model",
    "score",
    "train",
    "write_curves_csv",
    "write_report_csv",
]
