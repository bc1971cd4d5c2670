"""Second-order gradient boosting on the softmax objective.

Each round fits one regression tree per class to the gradient ``p - y`` and
hessian ``p (1 - p)`` of the cross-entropy. Leaf weights and split gains use
L1 (``alpha``) and L2 (``lambda``) regularisation on the gradient/hessian sums.
Raw scores start at the log class prior, so zero rounds predicts the prior.
"""

from __future__ import annotations

import numpy as np

from .base import ClassifierBase, ModelConfig, one_hot, softmax
from .trees import Tree


def soft_threshold(g, alpha):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def leaf_weight(G, H, reg_lambda, reg_alpha):
    """Optimal regularised leaf value ``-T_alpha(G) / (H + lambda)``."""
    return -soft_threshold(G, reg_alpha) / (H + reg_lambda)


def leaf_score(G, H, reg_lambda, reg_alpha):
    return soft_threshold(G, reg_alpha) ** 2 / (H + reg_lambda)


def best_gain_split(X, g, h, features, reg_lambda, reg_alpha, min_child_weight):
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    G, H = g.sum(), h.sum()
    GR, HR = G - GL, H - HL
    valid = (xs[:-1] < xs[1:]) & (HL >= min_child_weight) & (HR >= min_child_weight)
    if not valid.any():
        return None
    gain = 0.5 * (leaf_score(GL, HL, reg_lambda, reg_alpha) + leaf_score(GR, HR, reg_lambda, reg_alpha)
                  - leaf_score(G, H, reg_lambda, reg_alpha))
    gain = np.where(valid, gain, -np.inf)
    flat = gain.T.ravel()
    j = int(np.argmax(flat))
    fi, row = divmod(j, gain.shape[0])
    return features[fi], float(xs[row, fi]), float(flat[j])


def build_regression_tree(X, g, h, max_depth, reg_lambda, reg_alpha, min_child_weight, shrinkage) -> Tree:
    tree = Tree()
    features = np.arange(X.shape[1])

    def grow(rows, depth):
        G, H = g[rows].sum(), h[rows].sum()
        node = tree.add(np.array([shrinkage * leaf_weight(G, H, reg_lambda, reg_alpha)]))
        if depth >= max_depth or len(rows) < 2:
            return node
        split = best_gain_split(X[rows], g[rows], h[rows], features, reg_lambda, reg_alpha,
                                min_child_weight)
        if split is None or split[2] <= 0.0:
            return node
        f, thr, _ = split
        go_left = X[rows, f] <= thr
        tree.feature[node] = int(f)
        tree.threshold[node] = thr
        tree.left[node] = grow(rows[go_left], depth + 1)
        tree.right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return tree.freeze()


class GBTModel(ClassifierBase):
    kind = "gbt"

    def _fit(self, X, y_idx):
        prm = self.config.params
        k = len(self.classes_)
        Y = one_hot(y_idx, k)
        prior = Y.mean(axis=0)
        self.base_score_ = np.log(prior)
        F = np.tile(self.base_score_, (len(X), 1))
        self.rounds_: list[list[Tree]] = []
        self.train_loss_ = [self._loss(F, Y)]
        for _ in range(prm["n_rounds"]):
            P = softmax(F)
            grad, hess = P - Y, P * (1.0 - P)
            trees = []
            for c in range(k):
                t = build_regression_tree(X, grad[:, c], hess[:, c], prm["max_depth"], prm["reg_lambda"],
                                          prm["reg_alpha"], prm["min_child_weight"], prm["learning_rate"])
                trees.append(t)
                F[:, c] += t.predict_value(X)[:, 0]
            self.rounds_.append(trees)
            self.train_loss_.append(self._loss(F, Y))

    @staticmethod
    def _loss(F, Y):
        P = softmax(F)
        return float(-np.mean(np.sum(Y * np.log(np.clip(P, 1e-300, None)), axis=1)))

    def raw_score(self, X):
        X = self._check(X)
        F = np.tile(self.base_score_, (len(X), 1))
        for trees in self.rounds_:
            for c, t in enumerate(trees):
                F[:, c] += t.predict_value(X)[:, 0]
        return F

    def _proba(self, X):
        return softmax(self.raw_score(X))


def train_gbt(X, y, config: ModelConfig | None = None) -> GBTModel:
    return GBTModel(config or ModelConfig("gbt")).fit(X, y)
