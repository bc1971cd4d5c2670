"""Feed-forward network with tanh hidden layers and a softmax output.

Trained with Adam on shuffled mini-batches for a fixed epoch budget. The batch
loss is mean cross-entropy plus ``alpha / (2 * batch) * sum(W^2)`` over the
weight matrices.
"""

from __future__ import annotations

import numpy as np

from .base import ClassifierBase, ModelConfig, Standardizer, log_softmax, one_hot, softmax


def init_params(sizes, rng):
    """Glorot-uniform weights, zero biases. ``sizes`` includes input and output widths."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)))
    return params


def forward(params, X):
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = params[-1]
    return acts, h @ W + b


def loss_and_grads(params, X, Y, alpha):
    """Batch loss and per-layer ``(dW, db)`` gradients by backpropagation."""
    n = len(X)
    acts, Z = forward(params, X)
    loss = -np.sum(Y * log_softmax(Z)) / n
    loss += alpha / (2 * n) * sum(np.sum(W * W) for W, _ in params)
    delta = (softmax(Z) - Y) / n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        a = acts[i]
        grads[i] = (a.T @ delta + alpha / n * W, delta.sum(axis=0))
        if i:
            delta = (delta @ W.T) * (1.0 - a * a)
    return loss, grads


class MLPModel(ClassifierBase):
    kind = "mlp"

    def _fit(self, X, y_idx):
        prm = self.config.params
        rng = np.random.default_rng(self.config.seed)
        self.scaler_ = Standardizer().fit(X)
        Xs = self.scaler_.transform(X)
        k = len(self.classes_)
        Y = one_hot(y_idx, k)
        params = init_params([Xs.shape[1], *prm["hidden"], k], rng)
        flat = [a for layer in params for a in layer]
        m = [np.zeros_like(a) for a in flat]
        v = [np.zeros_like(a) for a in flat]
        lr, b1, b2, eps = prm["learning_rate"], 0.9, 0.999, 1e-8
        t = 0
        n = len(Xs)
        bs = min(prm["batch_size"], n)
        self.loss_curve_ = []
        for _ in range(prm["epochs"]):
            order = rng.permutation(n)
            total = 0.0
            for lo in range(0, n, bs):
                idx = order[lo:lo + bs]
                loss, grads = loss_and_grads(params, Xs[idx], Y[idx], prm["alpha"])
                total += loss * len(idx)
                t += 1
                gflat = [g for layer in grads for g in layer]
                for j, g in enumerate(gflat):
                    m[j] = b1 * m[j] + (1 - b1) * g
                    v[j] = b2 * v[j] + (1 - b2) * g * g
                    mhat = m[j] / (1 - b1 ** t)
                    vhat = v[j] / (1 - b2 ** t)
                    flat[j] -= lr * mhat / (np.sqrt(vhat) + eps)
            self.loss_curve_.append(total / n)
        self.params_ = params  # updated in place through ``flat``

    def _proba(self, X):
        return softmax(forward(self.params_, self.scaler_.transform(X))[1])


def train_mlp(X, y, config: ModelConfig | None = None) -> MLPModel:
    return MLPModel(config or ModelConfig("mlp")).fit(X, y)
