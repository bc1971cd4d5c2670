from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

KINDS = ("logistic", "random_forest", "gbt", "mlp")

MLP_ARCHITECTURES = ((128,), (128, 64), (256, 128, 64, 32, 16))

_DEFAULTS = {
    "logistic": {"C": 1.0, "max_iter": 300, "tol": 1e-6},
    "random_forest": {"n_trees": 100, "max_depth": 10, "min_samples_split": 2, "max_features": "sqrt",
                      "bootstrap": True},
    "gbt": {"n_rounds": 100, "learning_rate": 0.1, "reg_lambda": 0.1, "reg_alpha": 0.1, "max_depth": 6,
            "min_child_weight": 1.0},
    "mlp": {"hidden": (128,), "epochs": 200, "batch_size": 32, "learning_rate": 1e-3, "alpha": 1e-4},
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        merged.update(self.params)
        if self.kind == "mlp":
            merged["hidden"] = tuple(int(h) for h in merged["hidden"])
            if merged["hidden"] not in MLP_ARCHITECTURES:
                raise ValueError(f"mlp hidden layers must be one of {MLP_ARCHITECTURES}")
            if merged["epochs"] < 0 or merged["batch_size"] < 1:
                raise ValueError("mlp epochs must be >= 0 and batch_size >= 1")
        if self.kind == "logistic" and (merged["C"] <= 0 or merged["max_iter"] < 0):
            raise ValueError("logistic C must be positive and max_iter >= 0")
        if self.kind == "random_forest" and (merged["n_trees"] < 1 or
                                             (merged["max_depth"] is not None and merged["max_depth"] < 1)):
            raise ValueError("random_forest needs n_trees >= 1 and max_depth >= 1")
        if self.kind == "gbt" and (merged["n_rounds"] < 0 or merged["learning_rate"] <= 0
                                   or merged["reg_lambda"] < 0 or merged["reg_alpha"] < 0):
            raise ValueError("invalid gbt hyperparameters")
        object.__setattr__(self, "params", merged)
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    def __hash__(self):
        return hash((self.kind, self.name, self.seed, tuple(sorted((k, str(v)) for k, v in self.params.items()))))


# The six configurations of the model comparison, keyed by report name.
TABLE1_CONFIGS: dict[str, ModelConfig] = {
    "logistic": ModelConfig("logistic", {"C": 1.0, "max_iter": 300}, name="logistic"),
    "random_forest": ModelConfig("random_forest", {"n_trees": 100, "max_depth": 10}, name="random_forest"),
    "gbt": ModelConfig("gbt", {"n_rounds": 100, "learning_rate": 0.1, "reg_lambda": 0.1, "reg_alpha": 0.1},
                       name="gbt"),
    "mlp_1": ModelConfig("mlp", {"hidden": (128,)}, name="mlp_1"),
    "mlp_2": ModelConfig("mlp", {"hidden": (128, 64)}, name="mlp_2"),
    "mlp_5": ModelConfig("mlp", {"hidden": (256, 128, 64, 32, 16)}, name="mlp_5"),
}


class Standardizer:
    """Per-feature z-score; constant columns are centred but not scaled."""

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_


class ClassifierBase:
    """Shared label encoding. Subclasses implement ``_fit`` and ``_proba``."""

    kind = ""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.n_features_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
            raise ValueError("X must be (n, p) with n == len(y) > 0")
        self.n_features_ = X.shape[1]
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.constant_ = None
        if len(self.classes_) == 1:
            warnings.warn("single-class training labels; fitting a constant predictor", stacklevel=2)
            self.constant_ = 0
            return self
        self._fit(X, y_idx)
        return self

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} features, got shape {X.shape}")
        return X

    def predict_proba(self, X):
        X = self._check(X)
        if self.constant_ is not None:
            return np.ones((len(X), 1))
        return self._proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


def one_hot(y_idx, k):
    out = np.zeros((len(y_idx), k))
    out[np.arange(len(y_idx)), y_idx] = 1.0
    return out


def softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def log_softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
