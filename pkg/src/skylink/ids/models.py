"""From-scratch binary classifiers: logistic regression, Gaussian naive Bayes, boosted trees."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from ..errors import NonFiniteLoss, SingleClassTraining, WidthMismatch
from .features import FeatureMatrix, Standardizer

N_FEATURES = 4
VAR_FLOOR = 1e-9
MODEL_FORMAT = "skylink-ids-model"
MODEL_VERSION = 1


class ModelKind(enum.Enum):
    LOGISTIC_REGRESSION = "lr"
    GAUSSIAN_NB = "nb"
    GBDT = "gbdt"

    @classmethod
    def parse(cls, text) -> ModelKind:
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown model kind {text!r} (choose lr, nb or gbdt)")


@dataclass(frozen=True)
class LRParams:
    l2: float = 1e-4
    learning_rate: float = 0.1
    iterations: int = 500


@dataclass(frozen=True)
class NBParams:
    var_floor: float = VAR_FLOOR


@dataclass(frozen=True)
class GBDTParams:
    rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    l2: float = 1.0
    min_child_hessian: float = 1.0


DEFAULT_PARAMS = {
    ModelKind.LOGISTIC_REGRESSION: LRParams,
    ModelKind.GAUSSIAN_NB: NBParams,
    ModelKind.GBDT: GBDTParams,
}


@dataclass
class TrainedModel:
    kind: ModelKind
    hyperparameters: dict
    parameters: dict
    scaler: Standardizer | None = None
    loss_trace: list = field(default_factory=list)


def log_loss(p: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _check_width(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise WidthMismatch(f"expected {N_FEATURES} feature columns, got shape {X.shape}")
    return X


# -- logistic regression --------------------------------------------------------

def _lr_loss(w, b, X, y, l2):
    z = X @ w + b
    # log(1 + e^z) - y z, computed stably
    data = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(data + 0.5 * l2 * w @ w)


def train_lr(X, y, hp: LRParams) -> tuple[dict, list]:
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    trace = [_lr_loss(w, b, X, y, hp.l2)]
    for _ in range(hp.iterations):
        # overflow shows up as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            r = expit(X @ w + b) - y
            w = w - hp.learning_rate * (X.T @ r / n + hp.l2 * w)
            b = b - hp.learning_rate * r.mean()
            loss = _lr_loss(w, b, X, y, hp.l2)
        if not np.isfinite(loss):
            raise NonFiniteLoss("logistic regression diverged")
        trace.append(loss)
    return {"weights": w, "bias": b}, trace


def score_lr(params, X):
    return expit(X @ np.asarray(params["weights"]) + params["bias"])


# -- Gaussian naive Bayes -------------------------------------------------------------

def train_nb(X, y, hp: NBParams) -> tuple[dict, list]:
    classes = np.array([0, 1])
    priors = np.array([(y == c).mean() for c in classes])
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    variances = np.stack([np.maximum(X[y == c].var(axis=0), hp.var_floor) for c in classes])
    return {"priors": priors, "means": means, "variances": variances}, []


def nb_log_posteriors(params, X) -> np.ndarray:
    """Normalized log P(class | x), shape (n, 2)."""
    priors = np.asarray(params["priors"])
    means = np.asarray(params["means"])
    var = np.asarray(params["variances"])
    joint = np.log(priors)[None, :] - 0.5 * (
        np.log(2 * np.pi * var).sum(axis=1)[None, :]
        + (((X[:, None, :] - means[None]) ** 2) / var[None]).sum(axis=2)
    )
    return joint - logsumexp(joint, axis=1, keepdims=True)


def score_nb(params, X):
    return np.exp(nb_log_posteriors(params, X)[:, 1])


# -- gradient-boosted trees -----------------------------------------------------------

@dataclass
class Tree:
    """Flat binary tree. Internal nodes route ``x[feature] < threshold`` to ``left``."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add(self, value=0.0) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            idx = np.nonzero(inner)[0]
            go_left = X[idx, f[idx]] < threshold[node[idx]]
            node[idx] = np.where(go_left, left[node[idx]], right[node[idx]])
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return asdict(self)


def _best_splits(X, order, node_of, active, g, h, hp: GBDTParams):
    """Exact greedy split search for all active nodes at once.

    ``order[j]`` holds the row indices sorted by feature j. Returns a dict
    node -> (gain, feature, threshold).
    """
    best = {}
    rows_mask = np.isin(node_of, active)
    for j in range(X.shape[1]):
        o = order[j][rows_mask[order[j]]]
        nodes = node_of[o]
        # group by node while keeping the feature order inside each group
        perm = np.argsort(nodes, kind="stable")
        o = o[perm]
        nodes = nodes[perm]
        xv = X[o, j]
        gs = np.cumsum(g[o])
        hs = np.cumsum(h[o])
        starts = np.flatnonzero(np.r_[True, nodes[1:] != nodes[:-1]])
        ends = np.r_[starts[1:], len(o)]
        seg = np.repeat(np.arange(len(starts)), ends - starts)
        base_g = np.r_[0.0, gs][starts][seg]
        base_h = np.r_[0.0, hs][starts][seg]
        GL = gs - base_g
        HL = hs - base_h
        G = (gs[ends - 1] - np.r_[0.0, gs][starts])[seg]
        H = (hs[ends - 1] - np.r_[0.0, hs][starts])[seg]
        GR = G - GL
        HR = H - HL
        # a split after position i is valid only between distinct values of the same node
        valid = np.zeros(len(o), dtype=bool)
        valid[:-1] = (nodes[1:] == nodes[:-1]) & (xv[1:] > xv[:-1])
        valid &= (HL >= hp.min_child_hessian) & (HR >= hp.min_child_hessian)
        lam = hp.l2
        gain = np.where(
            valid,
            GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam),
            -np.inf,
        )
        for s, e in zip(starts, ends):
            k = s + int(np.argmax(gain[s:e]))
            if gain[k] > 1e-12:
                node = int(nodes[k])
                if node not in best or gain[k] > best[node][0]:
                    best[node] = (float(gain[k]), j, float(0.5 * (xv[k] + xv[k + 1])))
    return best


def build_tree(X, order, g, h, hp: GBDTParams) -> tuple[Tree, np.ndarray]:
    """Grow one regression tree level by level; returns the tree and each row's leaf value."""
    tree = Tree()
    root = tree.add()
    node_of = np.zeros(len(X), dtype=np.int64)
    active = [root]
    for _ in range(hp.max_depth):
        if not active:
            break
        splits = _best_splits(X, order, node_of, np.array(active), g, h, hp)
        next_active = []
        for node in active:
            if node not in splits:
                continue
            _, j, thr = splits[node]
            lft, rgt = tree.add(), tree.add()
            tree.feature[node], tree.threshold[node] = j, thr
            tree.left[node], tree.right[node] = lft, rgt
            rows = np.flatnonzero(node_of == node)
            to_left = X[rows, j] < thr
            node_of[rows[to_left]] = lft
            node_of[rows[~to_left]] = rgt
            next_active += [lft, rgt]
        active = next_active
    G = np.bincount(node_of, weights=g, minlength=len(tree.value))
    H = np.bincount(node_of, weights=h, minlength=len(tree.value))
    values = np.where(np.asarray(tree.feature) < 0, -G / (H + hp.l2) * hp.learning_rate, 0.0)
    tree.value = values.tolist()
    return tree, values[node_of]


def train_gbdt(X, y, hp: GBDTParams) -> tuple[dict, list]:
    prevalence = y.mean()
    base = float(np.log(prevalence / (1 - prevalence)))
    margin = np.full(len(y), base)
    order = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    trees = []
    trace = [log_loss(expit(margin), y)]
    for _ in range(hp.rounds):
        p = expit(margin)
        g = p - y
        h = p * (1 - p)
        tree, update = build_tree(X, order, g, h, hp)
        margin = margin + update
        loss = log_loss(expit(margin), y)
        if not np.isfinite(loss):
            raise NonFiniteLoss("boosting diverged")
        trace.append(loss)
        trees.append(tree)
    return {"base_score": base, "learning_rate": hp.learning_rate, "trees": trees}, trace


def score_gbdt(params, X):
    margin = np.full(len(X), float(params["base_score"]))
    for tree in params["trees"]:
        margin += tree.predict(X)
    return expit(margin)


# -- dispatch ---------------------------------------------------------------------------

_TRAIN = {
    ModelKind.LOGISTIC_REGRESSION: train_lr,
    ModelKind.GAUSSIAN_NB: train_nb,
    ModelKind.GBDT: train_gbdt,
}
_SCORE = {
    ModelKind.LOGISTIC_REGRESSION: score_lr,
    ModelKind.GAUSSIAN_NB: score_nb,
    ModelKind.GBDT: score_gbdt,
}


def train(kind, features: FeatureMatrix, hyperparameters=None) -> TrainedModel:
    kind = ModelKind.parse(kind)
    hp_cls = DEFAULT_PARAMS[kind]
    if hyperparameters is None:
        hp = hp_cls()
    elif isinstance(hyperparameters, hp_cls):
        hp = hyperparameters
    else:
        hp = hp_cls(**hyperparameters)
    X = _check_width(features.X)
    y = np.asarray(features.y, dtype=float)
    if np.unique(y).size < 2:
        raise SingleClassTraining("training data contains a single class")
    params, trace = _TRAIN[kind](X, y, hp)
    return TrainedModel(kind, asdict(hp), params, features.scaler, trace)


def score(model: TrainedModel, features) -> np.ndarray:
    """P(label = 1) per row; accepts a FeatureMatrix or a standardized array."""
    X = features.X if isinstance(features, FeatureMatrix) else features
    X = _check_width(X)
    return _SCORE[model.kind](model.parameters, X)


# -- persistence --------------------------------------------------------------------

def _encode_params(model: TrainedModel) -> dict:
    out = {}
    for key, value in model.parameters.items():
        if key == "trees":
            out[key] = [t.to_dict() for t in value]
        elif isinstance(value, np.ndarray):
            out[key] = value.tolist()
        else:
            out[key] = value
    return out


def _decode_params(kind: ModelKind, raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key == "trees":
            out[key] = [Tree(**t) for t in value]
        elif isinstance(value, list):
            out[key] = np.asarray(value, dtype=float)
        else:
            out[key] = value
    return out


def model_to_json(model: TrainedModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind.value,
        "hyperparameters": model.hyperparameters,
        "parameters": _encode_params(model),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a skylink IDS model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    kind = ModelKind.parse(doc["kind"])
    scaler = None if doc.get("scaler") is None else Standardizer.from_dict(doc["scaler"])
    return TrainedModel(kind, doc["hyperparameters"], _decode_params(kind, doc["parameters"]), scaler)


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.write_text(model_to_json(model) + "\n")
    return path


def load_model(path) -> TrainedModel:
    return model_from_json(Path(path).read_text())
