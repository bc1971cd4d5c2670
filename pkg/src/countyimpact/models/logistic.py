"""Multinomial logistic regression with an L2 penalty.

The objective is the summed cross-entropy plus ``||W||^2 / (2C)`` (the
intercept is not penalised), minimised with L-BFGS until the projected
gradient max-norm drops below ``tol`` or ``max_iter`` iterations pass.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .base import ClassifierBase, ModelConfig, Standardizer, log_softmax, one_hot, softmax


def unpack(theta, p, k):
    W = theta[: p * k].reshape(p, k)
    b = theta[p * k:]
    return W, b


def loss_and_grad(theta, X, Y, C):
    """Penalised negative log-likelihood and its gradient w.r.t. the flat parameters."""
    p, k = X.shape[1], Y.shape[1]
    W, b = unpack(theta, p, k)
    Z = X @ W + b
    loss = -np.sum(Y * log_softmax(Z)) + 0.5 * np.sum(W * W) / C
    R = softmax(Z) - Y
    gW = X.T @ R + W / C
    gb = R.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


class LogisticModel(ClassifierBase):
    kind = "logistic"

    def _fit(self, X, y_idx):
        prm = self.config.params
        self.scaler_ = Standardizer().fit(X)
        Xs = self.scaler_.transform(X)
        k = len(self.classes_)
        Y = one_hot(y_idx, k)
        theta0 = np.zeros(Xs.shape[1] * k + k)
        if prm["max_iter"] == 0:
            theta = theta0
            self.n_iter_ = 0
        else:
            res = minimize(loss_and_grad, theta0, args=(Xs, Y, prm["C"]), jac=True, method="L-BFGS-B",
                           options={"maxiter": prm["max_iter"], "gtol": prm["tol"], "ftol": 1e-15})
            theta = res.x
            self.n_iter_ = res.nit
        self.coef_, self.intercept_ = unpack(theta, Xs.shape[1], k)
        self.grad_norm_ = float(np.max(np.abs(loss_and_grad(theta, Xs, Y, prm["C"])[1])))

    def _proba(self, X):
        return softmax(self.scaler_.transform(X) @ self.coef_ + self.intercept_)


def train_logistic(X, y, config: ModelConfig | None = None) -> LogisticModel:
    return LogisticModel(config or ModelConfig("logistic")).fit(X, y)
