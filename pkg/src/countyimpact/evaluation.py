"""Scoring of severity estimates: macro-F1, Cohen's kappa, audit sampling.

Macro-F1 averages per-class F1 over the classes that occur in the true labels
(``exclude_absent=True``, the default); a class with zero precision and recall
scores 0.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .core import TASKS, task_tokens
from .rng import SplitMix64

AUDIT_SAMPLE_SIZE = 12


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    labels: tuple
    counts: np.ndarray  # rows true, columns predicted

    @classmethod
    def from_labels(cls, true: Sequence, pred: Sequence, label_set: Sequence | None = None):
        if len(true) != len(pred):
            raise ValueError(f"length mismatch: {len(true)} true vs {len(pred)} predicted")
        labels = tuple(label_set) if label_set is not None else tuple(sorted(set(true) | set(pred)))
        index = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(true, pred):
            if t not in index or p not in index:
                raise ValueError(f"label outside label set: {t if t not in index else p!r}")
            counts[index[t], index[p]] += 1
        return cls(labels, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def f1_per_class(self) -> dict:
        tp = np.diag(self.counts).astype(float)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        out = {}
        for i, lab in enumerate(self.labels):
            denom = 2 * tp[i] + fp[i] + fn[i]
            out[lab] = 0.0 if denom == 0 else 2 * tp[i] / denom
        return out


def macro_f1(true: Sequence, pred: Sequence, label_set: Sequence | None = None,
             exclude_absent: bool = True) -> float:
    if len(true) == 0:
        raise ValueError("need at least one scored pair")
    cm = ConfusionMatrix.from_labels(true, pred, label_set)
    f1 = cm.f1_per_class()
    present = set(true)
    classes = [lab for lab in cm.labels if lab in present] if exclude_absent else list(cm.labels)
    return float(sum(f1[c] for c in classes) / len(classes))


def cohens_kappa(a: Sequence, b: Sequence) -> float:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise ValueError("need at least one rated item")
    p_o = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = defaultdict(int), defaultdict(int)
    for x in a:
        ca[x] += 1
    for y in b:
        cb[y] += 1
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


# -- random baseline ------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineEstimate:
    mean: float
    stderr: float
    draws: int


def uniform_predictor_macro_f1(label_distribution: Mapping[Hashable, float], n_items: int = 100,
                    draws: int = 100_000, seed: int = 0, exclude_absent: bool = True) -> BaselineEstimate:
    """Expected macro-F1 of a uniform-random predictor, by Monte Carlo.

    Each draw samples ``n_items`` true labels from ``label_distribution`` and
    the same number of predictions uniformly over its labels.
    """
    if not label_distribution:
        raise ValueError("empty label distribution")
    probs = np.array(list(label_distribution.values()), dtype=np.float64)
    if (probs < 0).any() or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("label distribution must be nonnegative and sum to 1")
    k = len(probs)
    rng = np.random.default_rng(seed)
    scores = np.empty(draws)
    chunk = max(1, 2_000_000 // max(n_items, 1))
    for lo in range(0, draws, chunk):
        m = min(chunk, draws - lo)
        t = rng.choice(k, size=(m, n_items), p=probs)
        p = rng.integers(0, k, size=(m, n_items))
        flat = (np.arange(m)[:, None] * k * k + t * k + p).ravel()
        cm = np.bincount(flat, minlength=m * k * k).reshape(m, k, k)
        tp = np.diagonal(cm, axis1=1, axis2=2).astype(float)
        support = cm.sum(axis=2)
        denom = support + cm.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            f1 = np.where(denom > 0, 2 * tp / denom, 0.0)
        use = support > 0 if exclude_absent else np.ones_like(support, dtype=bool)
        scores[lo:lo + m] = (f1 * use).sum(axis=1) / use.sum(axis=1)
    return BaselineEstimate(float(scores.mean()), float(scores.std(ddof=1) / math.sqrt(draws))
                            if draws > 1 else float("nan"), draws)


# -- audit sampling -------------------------------------------------------------------------

@dataclass
class AuditSample:
    event_id: int
    doc_ids: tuple[str, ...]
    undersized: bool = False
    # doc_id -> (geolocation_correct, relevant)
    verdicts: dict[str, tuple[bool, bool]] = field(default_factory=dict)
    counties: dict[str, str] = field(default_factory=dict)  # doc_id -> fips


def sample_audit(docs: Iterable, event_id: int, n: int = AUDIT_SAMPLE_SIZE, seed: int = 0) -> AuditSample:
    """Draw up to ``n`` documents of one event for manual checking.

    With at least ``n`` counties represented, ``n`` counties are drawn and one
    document is drawn within each; otherwise documents are drawn uniformly.
    Candidates are sorted by id first so only the seed matters.
    """
    pool = sorted((d for d in docs if d.county_event.event.event_id == event_id), key=lambda d: d.doc_id)
    if not pool:
        raise ValueError(f"no documents for event {event_id}")
    fips_of = {d.doc_id: d.county_event.county.fips for d in pool}
    rng = SplitMix64(seed)
    if len(pool) <= n:
        chosen = [d.doc_id for d in pool]
        return AuditSample(event_id, tuple(chosen), undersized=len(pool) < n,
                           counties={i: fips_of[i] for i in chosen})
    by_county: dict[str, list[str]] = defaultdict(list)
    for d in pool:
        by_county[d.county_event.county.fips].append(d.doc_id)
    if len(by_county) >= n:
        counties = rng.sample(sorted(by_county), n)
        chosen = [by_county[c][rng.below(len(by_county[c]))] for c in counties]
    else:
        chosen = rng.sample([d.doc_id for d in pool], n)
    return AuditSample(event_id, tuple(chosen), counties={i: fips_of[i] for i in chosen})


AUDIT_COLUMNS = ("doc_id", "event_id", "geolocation_correct", "relevant")


def write_audit_sheet(samples: Iterable[AuditSample], path: str | Path, docs_by_id: Mapping | None = None) -> None:
    """Blank annotation sheet; title/url columns are added when documents are given."""
    extra = ("fips", "title", "url") if docs_by_id is not None else ()
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(AUDIT_COLUMNS + extra)
        for s in samples:
            for doc_id in s.doc_ids:
                row = [doc_id, s.event_id, "", ""]
                if docs_by_id is not None:
                    d = docs_by_id[doc_id]
                    row += [d.county_event.county.fips, d.title, d.url or ""]
                w.writerow(row)


def _verdict(raw: str, doc_id: str, column: str) -> bool | None:
    raw = (raw or "").strip()
    if raw == "":
        return None
    if raw not in ("0", "1"):
        raise ValueError(f"{doc_id}: {column} must be 1 or 0, got {raw!r}")
    return raw == "1"


def read_audit_sheet(path: str | Path) -> dict[int, AuditSample]:
    samples: dict[int, AuditSample] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            eid = int(row["event_id"])
            s = samples.setdefault(eid, AuditSample(eid, ()))
            s.doc_ids = s.doc_ids + (row["doc_id"],)
            geo = _verdict(row["geolocation_correct"], row["doc_id"], "geolocation_correct")
            rel = _verdict(row["relevant"], row["doc_id"], "relevant")
            if geo is not None and rel is not None:
                s.verdicts[row["doc_id"]] = (geo, rel)
    for s in samples.values():
        s.undersized = len(s.doc_ids) < AUDIT_SAMPLE_SIZE
    return samples


def _pct(k: int, n: int) -> float:
    return float((Decimal(100 * k) / Decimal(n)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def audit_accuracy(sample: AuditSample) -> tuple[float, float]:
    """(geolocation, relevance) accuracy in percent, one decimal place."""
    missing = [i for i in sample.doc_ids if i not in sample.verdicts]
    if missing:
        raise ValueError(f"missing verdicts for {', '.join(missing)}")
    n = len(sample.doc_ids)
    if n == 0:
        raise ValueError("empty audit sample")
    geo = sum(sample.verdicts[i][0] for i in sample.doc_ids)
    rel = sum(sample.verdicts[i][1] for i in sample.doc_ids)
    return _pct(geo, n), _pct(rel, n)


# -- report bundle ----------------------------------------------------------------------------

ASSESSMENT_COLUMNS = ("fips", "event_id", "source", "model", "property", "crop", "injuries", "fatalities")


def read_assessments(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = []
        for row in csv.DictReader(f):
            row = {k: row[k].strip() for k in ASSESSMENT_COLUMNS}
            row["event_id"] = int(row["event_id"])
            rows.append(row)
        return rows


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


@dataclass
class MetricsReport:
    table3: list[dict] = field(default_factory=list)
    figure3: list[dict] = field(default_factory=list)
    figure5: list[dict] = field(default_factory=list)
    table2: list[dict] = field(default_factory=list)
    orphans: list[dict] = field(default_factory=list)
    event_ids: list[int] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.orphans)


def _key(row) -> str:
    return f"{row['fips']}:{row['event_id']}"


def build_report(assessments: Sequence[dict], ground_truth: Mapping[tuple[str, int], Mapping[str, str]],
                 sweep_summary: Sequence[dict] = (), audits: Iterable[AuditSample] = (),
                 perceptions: Sequence[dict] = ()) -> MetricsReport:
    """Assemble table/figure rows. Every row carries the ids it was computed from."""
    report = MetricsReport()
    for row in list(assessments) + list(perceptions):
        if (row["fips"], row["event_id"]) not in ground_truth:
            report.orphans.append({"kind": "assessment", "key": _key(row), "source": row["source"],
                                   "model": row["model"]})

    # table3.csv: macro-F1 per model x source x category x event
    event_ids = sorted({r["event_id"] for r in assessments})
    report.event_ids = event_ids
    groups: dict[tuple[str, str], list[dict]] = defaultdict(list)
    for r in assessments:
        groups[(r["model"], r["source"])].append(r)
    for (model, source), rows in sorted(groups.items()):
        for task in TASKS:
            out = {"model": model, "source": source, "category": task}
            prov = []
            for eid in event_ids:
                scored = sorted((r for r in rows if r["event_id"] == eid and
                                 (r["fips"], eid) in ground_truth), key=_key)
                if scored:
                    true = [ground_truth[(r["fips"], eid)][task] for r in scored]
                    pred = [r[task] for r in scored]
                    out[f"event_{eid}"] = _fmt(macro_f1(true, pred, task_tokens(task)))
                else:
                    out[f"event_{eid}"] = ""
                prov.append(f"{eid}=" + ",".join(r["fips"] for r in scored))
            out["provenance"] = ";".join(prov)
            report.table3.append(out)

    for s in sweep_summary:
        report.figure3.append(dict(s))

    # figure5.csv: pairwise kappa between offline records and every rater
    raters: dict[str, dict[str, dict]] = defaultdict(dict)
    for r in list(assessments) + list(perceptions):
        raters[f"{r['model']}/{r['source']}"][_key(r)] = r
    names = ["sheldus"] + sorted(raters)
    for task in TASKS:
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                la = _labels_for(a, task, ground_truth, raters)
                lb = _labels_for(b, task, ground_truth, raters)
                common = sorted(set(la) & set(lb))
                kappa = cohens_kappa([la[k] for k in common], [lb[k] for k in common]) if common else None
                report.figure5.append({"category": task, "rater_a": a, "rater_b": b, "kappa": _fmt(kappa),
                                       "n": len(common), "provenance": ";".join(common)})

    for s in sorted(audits, key=lambda s: s.event_id):
        geo, rel = audit_accuracy(s)
        report.table2.append({"event_id": s.event_id, "sample_size": len(s.doc_ids),
                              "undersized": int(s.undersized), "geolocation_acc": f"{geo:.1f}",
                              "relevance_acc": f"{rel:.1f}", "provenance": ";".join(s.doc_ids)})
    return report


def _labels_for(name, task, ground_truth, raters) -> dict[str, str]:
    if name == "sheldus":
        return {f"{f}:{e}": labels[task] for (f, e), labels in ground_truth.items()}
    return {k: r[task] for k, r in raters[name].items()}


TABLE2_COLUMNS = ("event_id", "sample_size", "undersized", "geolocation_acc", "relevance_acc", "provenance")
FIGURE3_COLUMNS = ("scope", "model", "window_days", "task", "macro_f1_mean", "macro_f1_std", "n_folds",
                   "random_baseline", "status", "provenance")
FIGURE5_COLUMNS = ("category", "rater_a", "rater_b", "kappa", "n", "provenance")


def _write(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def write_report(report: MetricsReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t3_cols = ["model", "source", "category"] + [f"event_{e}" for e in report.event_ids] + ["provenance"]
    return [
        _write(out / "table3.csv", t3_cols, report.table3),
        _write(out / "figure3.csv", FIGURE3_COLUMNS, report.figure3),
        _write(out / "figure5.csv", FIGURE5_COLUMNS, report.figure5),
        _write(out / "table2.csv", TABLE2_COLUMNS, report.table2),
        _write(out / "orphans.csv", ("kind", "key", "source", "model"), report.orphans),
    ]
