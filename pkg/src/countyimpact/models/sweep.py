"""Cross-validated buffer-window sweep over the model configurations.

Rows are county-events; each window contributes its 81 transition areas plus a
``missing`` flag column (rows absent from a window's feature file are zero
imputed with the flag set). Folds are stratified per task and depend only on
the row ids and the seed.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..core import task_tokens
from ..evaluation import BaselineEstimate, macro_f1, uniform_predictor_macro_f1
from ..raster import FEATURE_NAMES, FeatureRow
from .base import ModelConfig
from .gbt import train_gbt
from .logistic import train_logistic
from .mlp import train_mlp
from .trees import train_random_forest

log = logging.getLogger(__name__)

TRAINERS = {
    "logistic": train_logistic,
    "random_forest": train_random_forest,
    "gbt": train_gbt,
    "mlp": train_mlp,
}

REMOTE_SENSING_TASKS = ("property", "crop")
MISSING_FLAG = "missing"


def train_model(X, y, config: ModelConfig):
    return TRAINERS[config.kind](X, y, config)


def random_baseline(task: str, label_distribution: Mapping[str, float], n_items: int = 100,
                    draws: int = 100_000, seed: int = 0) -> BaselineEstimate:
    """Expected macro-F1 of guessing uniformly over ``task``'s labels (Monte Carlo)."""
    tokens = task_tokens(task)
    unknown = set(label_distribution) - set(tokens)
    if unknown:
        raise ValueError(f"labels {sorted(unknown)} not in task {task!r}")
    dist = {t: label_distribution.get(t, 0.0) for t in tokens}
    return uniform_predictor_macro_f1(dist, n_items=n_items, draws=draws, seed=seed)


@dataclass
class FeatureMatrix:
    row_ids: list[str]
    columns: list[str]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.row_ids), len(self.columns)):
            raise ValueError("feature matrix shape does not match ids/columns")
        if not np.isfinite(self.values).all():
            raise ValueError("feature matrix has missing or non-finite values")


def row_id(fips: str, event_id: int) -> str:
    return f"{fips}:{event_id}"


def build_feature_matrix(rows: Sequence[FeatureRow], keys: Sequence[tuple[str, int]]) -> FeatureMatrix:
    by_key = {(r.fips, r.event_id): r for r in rows}
    values = np.zeros((len(keys), len(FEATURE_NAMES) + 1))
    for i, key in enumerate(keys):
        r = by_key.get(key)
        if r is None:
            values[i, -1] = 1.0
        else:
            values[i, :-1] = r.values
    return FeatureMatrix([row_id(*k) for k in keys], list(FEATURE_NAMES) + [MISSING_FLAG], values)


@dataclass(frozen=True)
class SplitSpec:
    strategy: str = "stratified_kfold"
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.strategy != "stratified_kfold":
            raise ValueError(f"unsupported split strategy {self.strategy!r}")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


def _rank_key(seed: int, rid: str) -> bytes:
    return hashlib.sha256(f"{seed}|{rid}".encode()).digest()


def stratified_folds(row_ids: Sequence[str], y: Sequence, folds: int, seed: int) -> np.ndarray:
    """Fold index per row.

    Within each class (taken in sorted order) rows are ordered by a seeded hash
    of their id and dealt round-robin, continuing the deal across classes so
    fold sizes stay balanced.
    """
    y = np.asarray(y)
    out = np.empty(len(row_ids), dtype=np.int64)
    deal = 0
    for cls in sorted(set(y.tolist())):
        members = [i for i in range(len(row_ids)) if y[i] == cls]
        members.sort(key=lambda i: _rank_key(seed, row_ids[i]))
        for i in members:
            out[i] = deal % folds
            deal += 1
    return out


@dataclass
class FoldScore:
    fold: int
    macro_f1: float | None
    status: str  # "ok" or "rejected: ..."


def cross_validate(X, y, row_ids, config: ModelConfig, split: SplitSpec, label_set) -> list[FoldScore]:
    y = np.asarray(y)
    fold_of = stratified_folds(row_ids, y, split.folds, split.seed)
    classes = set(y.tolist())
    scores = []
    for k in range(split.folds):
        test = fold_of == k
        train = ~test
        if not test.any():
            scores.append(FoldScore(k, None, "rejected: empty test fold"))
            continue
        missing = classes - set(y[train].tolist())
        if missing:
            scores.append(FoldScore(k, None, f"rejected: training fold lacks {sorted(missing)}"))
            continue
        model = train_model(X[train], y[train], config)
        pred = model.predict(X[test])
        scores.append(FoldScore(k, macro_f1(list(y[test]), list(pred), label_set), "ok"))
    return scores


@dataclass
class SweepResult:
    folds: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)

    def mean(self, model: str, window: int, task: str, scope: str = "pooled") -> float | None:
        for s in self.summary:
            if (s["model"] == model and s["window_days"] == window and s["task"] == task
                    and s["scope"] == scope):
                return None if s["macro_f1_mean"] == "" else float(s["macro_f1_mean"])
        raise KeyError((model, window, task))


def _cell(args):
    config, window, task, X, y, ids, split, label_set = args
    return config.name, window, task, cross_validate(X, y, ids, config, split, label_set)


def evaluate_sweep(features: Mapping[int, Sequence[FeatureRow] | None],
                   labels: Mapping[tuple[str, int], Mapping[str, str]],
                   configs: Sequence[ModelConfig], split: SplitSpec = SplitSpec(),
                   tasks: Sequence[str] = REMOTE_SENSING_TASKS, baseline_draws: int = 100_000,
                   workers: int = 1, per_event: bool = False) -> SweepResult:
    """Mean cross-validated macro-F1 per (model, window, task).

    A window whose feature rows are None is reported as absent. Rows are the
    county-events present in ``labels``, pooled across events unless
    ``per_event`` is set, in which case each event gets its own sweep.
    """
    if not per_event:
        return _sweep(features, labels, configs, split, tasks, baseline_draws, workers, "pooled")
    result = SweepResult()
    for eid in sorted({e for _, e in labels}):
        sub = {k: v for k, v in labels.items() if k[1] == eid}
        part = _sweep(features, sub, configs, split, tasks, baseline_draws, workers, f"event_{eid}")
        result.folds += part.folds
        result.summary += part.summary
    return result


def _sweep(features, labels, configs, split, tasks, baseline_draws, workers, scope) -> SweepResult:
    keys = sorted(labels)
    ids = [row_id(*k) for k in keys]
    windows = sorted(features)
    result = SweepResult()
    jobs, absent = [], []
    for window in windows:
        rows = features[window]
        if rows is None:
            absent.append(window)
            continue
        fm = build_feature_matrix(rows, keys)
        for task in tasks:
            y = np.array([labels[k][task] for k in keys])
            for config in configs:
                jobs.append((config, window, task, fm.values, y, ids, split, task_tokens(task)))

    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_cell, jobs))
    else:
        outcomes = [_cell(j) for j in jobs]

    baselines = {}
    n_test = max(1, round(len(keys) / split.folds))
    for task in tasks:
        y = [labels[k][task] for k in keys]
        dist = {t: y.count(t) / len(y) for t in task_tokens(task)}
        baselines[task] = random_baseline(task, dist, n_items=n_test, draws=baseline_draws,
                                          seed=split.seed).mean

    digest = hashlib.sha256("\n".join(ids).encode()).hexdigest()[:12]
    cells = {(name, window, task): scores for name, window, task, scores in outcomes}
    for config in configs:
        for window in windows:
            for task in tasks:
                base = {"scope": scope, "model": config.name, "window_days": window, "task": task,
                        "random_baseline": f"{baselines[task]:.6f}"}
                if window in absent:
                    result.summary.append({**base, "macro_f1_mean": "", "macro_f1_std": "", "n_folds": 0,
                                           "status": "absent", "provenance": ""})
                    continue
                scores = cells[(config.name, window, task)]
                ok = [s for s in scores if s.macro_f1 is not None]
                for s in scores:
                    if s.macro_f1 is None:
                        log.warning("%s window %d %s fold %d %s", config.name, window, task, s.fold, s.status)
                    else:
                        result.folds.append({"scope": scope, "model": config.name, "window_days": window, "task": task,
                                             "fold": s.fold, "macro_f1": f"{s.macro_f1:.6f}"})
                vals = np.array([s.macro_f1 for s in ok])
                result.summary.append({
                    **base,
                    "macro_f1_mean": f"{vals.mean():.6f}" if len(ok) else "",
                    "macro_f1_std": f"{vals.std():.6f}" if len(ok) else "",
                    "n_folds": len(ok),
                    "status": "ok" if len(ok) == len(scores) else f"{len(scores) - len(ok)} folds rejected",
                    "provenance": f"rows={digest};folds=" + ",".join(str(s.fold) for s in ok),
                })
    return result


SWEEP_COLUMNS = ("scope", "model", "window_days", "task", "fold", "macro_f1")
SUMMARY_COLUMNS = ("scope", "model", "window_days", "task", "macro_f1_mean", "macro_f1_std", "n_folds",
                   "random_baseline", "status", "provenance")


def write_sweep(result: SweepResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, cols, rows in (("sweep_results.csv", SWEEP_COLUMNS, result.folds),
                             ("sweep_summary.csv", SUMMARY_COLUMNS, result.summary)):
        with open(out / name, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=list(cols), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        paths.append(out / name)
    return paths


def read_sweep_summary(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["window_days"] = int(r["window_days"])
    return rows
