"""CART classification trees (Gini) and a bagged random forest.

Split search is vectorised over candidate features: each column is sorted once
per node and class counts are accumulated with a cumulative sum. A split sends
``x <= threshold`` left, where the threshold is the larger-left observed value,
so any increasing per-feature transform of X yields the same partition.
"""

from __future__ import annotations

import math

import numpy as np

from .base import ClassifierBase, ModelConfig, one_hot


class Tree:
    """Flat array representation; ``feature == -1`` marks a leaf."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def add(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def freeze(self):
        self.feature_ = np.array(self.feature, dtype=np.int64)
        self.threshold_ = np.array(self.threshold, dtype=np.float64)
        self.left_ = np.array(self.left, dtype=np.int64)
        self.right_ = np.array(self.right, dtype=np.int64)
        self.value_ = np.array(self.value, dtype=np.float64)
        return self

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature_[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            f = self.feature_[node[idx]]
            go_left = X[idx, f] <= self.threshold_[node[idx]]
            node[idx] = np.where(go_left, self.left_[node[idx]], self.right_[node[idx]])
            active = self.feature_[node] >= 0
        return node

    def predict_value(self, X):
        return self.value_[self.apply(X)]

    @property
    def depth(self) -> int:
        def d(i):
            return 0 if self.feature[i] < 0 else 1 + max(d(self.left[i]), d(self.right[i]))
        return d(0)


def best_gini_split(X, W, features, min_leaf=1.0):
    """Best (feature, threshold, score) over ``features``.

    ``W`` is the (n, k) matrix of per-row weighted class indicators. The score
    is ``sum(L^2)/|L| + sum(R^2)/|R|``, which is maximal where the weighted Gini
    impurity of the children is minimal. Ties go to the lowest feature index
    in ``features`` order, then the lowest threshold. Returns None if no valid
    split exists.
    """
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    Ws = W[order]  # (n, f, k)
    left = np.cumsum(Ws, axis=0)[:-1]
    total = W.sum(axis=0)
    right = total - left
    nl = left.sum(axis=2)
    nr = right.sum(axis=2)
    valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (left ** 2).sum(axis=2) / nl + (right ** 2).sum(axis=2) / nr
    score = np.where(valid, score, -np.inf)
    flat = score.T.ravel()  # feature-major so ties prefer earlier features
    j = int(np.argmax(flat))
    fi, row = divmod(j, score.shape[0])
    return features[fi], float(xs[row, fi]), float(flat[j])


def _n_sub(max_features, p):
    if max_features in (None, "all"):
        return p
    if max_features == "sqrt":
        return max(1, int(math.sqrt(p)))
    if isinstance(max_features, float):
        return max(1, int(max_features * p))
    return max(1, min(p, int(max_features)))


def build_classification_tree(X, y_idx, k, weights=None, max_depth=None, min_samples_split=2,
                              max_features=None, rng=None) -> Tree:
    """Grow a Gini tree. Leaf values are class-weight fractions."""
    n, p = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    W = one_hot(y_idx, k) * w[:, None]
    mtry = _n_sub(max_features, p)
    tree = Tree()

    def grow(rows, depth):
        counts = W[rows].sum(axis=0)
        node = tree.add(counts / counts.sum())
        if (max_depth is not None and depth >= max_depth) or counts.sum() < min_samples_split \
                or np.count_nonzero(counts) <= 1:
            return node
        Xn = X[rows]
        varying = np.nonzero(Xn.max(axis=0) > Xn.min(axis=0))[0]
        if len(varying) == 0:
            return node
        if mtry < p:
            # visit features in random order, keeping the first mtry that vary here
            perm = rng.permutation(p)
            feats = perm[np.isin(perm, varying)][:mtry]
        else:
            feats = varying
        split = best_gini_split(Xn, W[rows], feats)
        if split is None:
            return node
        f, thr, score = split
        parent = float((counts ** 2).sum() / counts.sum())
        if score <= parent + 1e-12:
            return node
        go_left = Xn[:, f] <= thr
        tree.feature[node] = int(f)
        tree.threshold[node] = thr
        tree.left[node] = grow(rows[go_left], depth + 1)
        tree.right[node] = grow(rows[~go_left], depth + 1)
        return node

    rows = np.nonzero(w > 0)[0]
    grow(rows, 0)
    return tree.freeze()


class DecisionTreeModel(ClassifierBase):
    """Single CART tree; used on its own mainly for inspection and tests."""

    kind = "tree"

    def __init__(self, max_depth=None, min_samples_split=2, max_features=None, seed=0):
        super().__init__(config=None)
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.seed = seed

    def _fit(self, X, y_idx):
        self.tree_ = build_classification_tree(X, y_idx, len(self.classes_), None, self.max_depth,
                                               self.min_samples_split, self.max_features,
                                               np.random.default_rng(self.seed))

    def _proba(self, X):
        return self.tree_.predict_value(X)


class RandomForestModel(ClassifierBase):
    """Bootstrap-aggregated Gini trees with sqrt(p) features per node; hard majority vote."""

    kind = "random_forest"

    def _fit(self, X, y_idx):
        prm = self.config.params
        rng = np.random.default_rng(self.config.seed)
        n = len(X)
        k = len(self.classes_)
        self.trees_ = []
        for _ in range(prm["n_trees"]):
            tree_rng = np.random.default_rng(rng.integers(2 ** 63))
            if prm["bootstrap"]:
                weights = np.bincount(tree_rng.integers(0, n, n), minlength=n).astype(np.float64)
            else:
                weights = None
            self.trees_.append(build_classification_tree(
                X, y_idx, k, weights, prm["max_depth"], prm["min_samples_split"], prm["max_features"],
                tree_rng))

    def votes(self, X):
        X = self._check(X)
        k = len(self.classes_)
        tally = np.zeros((len(X), k), dtype=np.int64)
        for t in self.trees_:
            tally[np.arange(len(X)), np.argmax(t.predict_value(X), axis=1)] += 1
        return tally

    def _proba(self, X):
        tally = self.votes(X)
        return tally / tally.sum(axis=1, keepdims=True)


def train_random_forest(X, y, config: ModelConfig | None = None) -> RandomForestModel:
    return RandomForestModel(config or ModelConfig("random_forest")).fit(X, y)
