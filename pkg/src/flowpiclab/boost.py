"""Gradient-boosted decision trees with softmax objective (baseline model).

Second-order boosting: per round, one regression tree per class is fit to
the softmax gradients/hessians with exact greedy splits and L2 leaf
regularization.  Feature extraction covers flattened flowpics and early
time-series statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataio import FlowRecord
from .flowpic import DEFAULT_WINDOW, build_flowpic
from .nn import backend
from .nn.losses import softmax


@dataclass(frozen=True)
class FeatureSource:
    """Either flattened_flowpic(resolution) or early_timeseries(k packets)."""

    kind: str
    resolution: int = 32
    window: float = DEFAULT_WINDOW
    k: int = 10

    def __post_init__(self):
        if self.kind not in ("flattened_flowpic", "early_timeseries"):
            raise ValueError(f"unknown feature source {self.kind!r}")

    @property
    def length(self) -> int:
        if self.kind == "flattened_flowpic":
            return self.resolution * self.resolution
        return 3 * self.k


def extract_features(flow: FlowRecord, source: FeatureSource) -> np.ndarray:
    """Deterministic feature vector for one flow."""
    series = flow.series
    if source.kind == "flattened_flowpic":
        fp = build_flowpic(series, source.resolution, source.window)
        return fp.counts.astype(np.float64).ravel()
    k = source.k
    sizes = np.zeros(k)
    directions = np.zeros(k)
    intertimes = np.zeros(k)
    n = min(len(series), k)
    sizes[:n] = series.sizes[:n]
    if series.directions is not None:
        directions[:n] = series.directions[:n]
    if n > 1:
        intertimes[1:n] = np.diff(series.timestamps[:n])
    return np.concatenate([sizes, directions, intertimes])


@dataclass
class BoostParams:
    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    lam: float = 1.0  # L2 leaf regularization

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.n_rounds < 0 or self.learning_rate <= 0 or self.lam < 0:
            raise ValueError("invalid boosting parameters")


@dataclass
class Tree:
    """Flat node list; node 0 is the root.  Leaves have feature == -1."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_leaf(self, weight) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(weight))
        return len(self.feature) - 1

    def add_split(self, feature, threshold) -> int:
        self.feature.append(int(feature))
        self.threshold.append(float(threshold))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X) -> np.ndarray:
        out = np.empty(len(X))
        node = np.zeros(len(X), dtype=np.int64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        active = np.arange(len(X))
        while len(active):
            f = feature[node[active]]
            leaf = f < 0
            out[active[leaf]] = value[node[active[leaf]]]
            rest = active[~leaf]
            if not len(rest):
                break
            goes_left = X[rest, feature[node[rest]]] <= threshold[node[rest]]
            node[rest] = np.where(goes_left, left[node[rest]], right[node[rest]])
            active = rest
        return out

    def depth(self, node=0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))


def _build_tree(X, g, h, params: BoostParams) -> Tree:
    tree = Tree()

    def grow(idx, depth) -> int:
        G = g[idx].sum()
        H = h[idx].sum()
        if depth >= params.max_depth or len(idx) < 2:
            return tree.add_leaf(-G / (H + params.lam))
        Xn = np.ascontiguousarray(X[idx])
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.ascontiguousarray(np.take_along_axis(Xn, order, axis=0))
        gs = np.ascontiguousarray(g[idx][order])
        hs = np.ascontiguousarray(h[idx][order])
        raw, feat, thr = backend.split_scan(xs, gs, hs, params.lam)
        gain = 0.5 * (raw - G * G / (H + params.lam))
        if feat < 0 or gain <= 0:
            return tree.add_leaf(-G / (H + params.lam))
        node = tree.add_split(feat, thr)
        goes_left = X[idx, feat] <= thr
        tree.left[node] = grow(idx[goes_left], depth + 1)
        tree.right[node] = grow(idx[~goes_left], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return tree


@dataclass
class BoostModel:
    classes: list
    trees: list  # trees[round][class_index]
    params: BoostParams
    feature_length: int
    train_logloss: list = field(default_factory=list)

    def decision_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.feature_length:
            raise ValueError(
                f"expected {self.feature_length} features, got {X.shape[1]}")
        scores = np.zeros((len(X), len(self.classes)))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.params.learning_rate * tree.predict(X)
        return scores

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_scores(X))

    def predict(self, X) -> list:
        proba = self.predict_proba(X)
        return [self.classes[i] for i in proba.argmax(axis=1)]


def fit(X, y, params: BoostParams | None = None) -> BoostModel:
    """Fit the multiclass boosted-tree model.

    Training log-loss is recorded per round and is nonincreasing.
    """
    params = params or BoostParams()
    X = np.asarray(X, dtype=np.float64)
    classes = sorted(set(y))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    class_to_idx = {c: i for i, c in enumerate(classes)}
    yi = np.array([class_to_idx[label] for label in y])
    n, k = len(X), len(classes)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), yi] = 1.0

    scores = np.zeros((n, k))
    trees = []
    logloss = []
    for _ in range(params.n_rounds):
        p = softmax(scores)
        round_trees = []
        for c in range(k):
            g = p[:, c] - onehot[:, c]
            h = np.maximum(p[:, c] * (1.0 - p[:, c]), 1e-16)
            round_trees.append(_build_tree(X, g, h, params))
        for c in range(k):
            scores[:, c] += params.learning_rate * round_trees[c].predict(X)
        trees.append(round_trees)
        p = softmax(scores)
        logloss.append(float(-np.mean(np.log(p[np.arange(n), yi] + 1e-300))))
    return BoostModel(classes, trees, params, X.shape[1], logloss)


def save_model(model: BoostModel, path) -> None:
    obj = {
        "classes": model.classes,
        "feature_length": model.feature_length,
        "params": {
            "n_rounds": model.params.n_rounds,
            "max_depth": model.params.max_depth,
            "learning_rate": model.params.learning_rate,
            "lam": model.params.lam,
        },
        "train_logloss": model.train_logloss,
        "trees": [
            [
                {
                    "feature": t.feature, "threshold": t.threshold,
                    "left": t.left, "right": t.right, "value": t.value,
                }
                for t in round_trees
            ]
            for round_trees in model.trees
        ],
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_model(path) -> BoostModel:
    with open(path) as fh:
        obj = json.load(fh)
    trees = [
        [Tree(t["feature"], t["threshold"], t["left"], t["right"], t["value"])
         for t in round_trees]
        for round_trees in obj["trees"]
    ]
    return BoostModel(obj["classes"], trees, BoostParams(**obj["params"]),
                      obj["feature_length"], obj["train_logloss"])
