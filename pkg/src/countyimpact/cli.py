"""Command-line pipeline over a shared dataset store.

Exit codes: 0 success, 2 configuration or input error, 3 missing upstream
artifact, 4 partial success.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .config import ConfigError, PipelineConfig, load_config, with_overrides
from .core import (DEFAULT_EVENTS, CountyEvent, DataError, ground_truth, load_events, load_ground_truth,
                   load_loss_records, save_ground_truth)
from .evaluation import build_report, read_assessments, read_audit_sheet, sample_audit, write_audit_sheet, \
    write_report
from .gazetteer import (QuerySpec, build_news_query, hazard_keywords, load_gazetteer, map_subreddits,
                        read_subreddit_list, save_subreddit_mappings)
from .llm import (ChatConfig, HTTPChatClient, Transcript, assess_corpus, heuristic_client, write_assessments,
                  write_summaries)
from .media import (FetchError, GNewsClient, StubNewsClient, fetch_news, judge_relevance, load_corpus,
                    mark_keyword_hits, news_window, persist_corpus, read_social_archive)
from .models.base import TABLE1_CONFIGS
from .models.sweep import SplitSpec, evaluate_sweep, read_sweep_summary, write_sweep
from .raster import compute_features, read_feature_csv, write_feature_csv
from .store import DatasetStore, StoreLocked

log = logging.getLogger("countyimpact")

EXIT_OK, EXIT_CONFIG, EXIT_UPSTREAM, EXIT_PARTIAL = 0, 2, 3, 4

GROUND_TRUTH = "features/ground_truth.csv"
SWEEP_SUMMARY = "models/sweep_summary.csv"
ASSESSMENTS = "assessments/assessments.csv"


class UpstreamMissing(RuntimeError):
    def __init__(self, rel: str, producer: str):
        super().__init__(f"missing {rel}; run `countyimpact {producer}` first")
        self.rel = rel
        self.producer = producer


@dataclass
class Context:
    cfg: PipelineConfig
    store: DatasetStore
    dry_run: bool = False
    suffix: str = ""
    notes: list[str] = field(default_factory=list)
    _gazetteer: object = None
    _events: object = None

    @property
    def events(self):
        if self._events is None:
            self._events = load_events(self.cfg.paths.events) if self.cfg.paths.events else DEFAULT_EVENTS
        return self._events

    @property
    def gazetteer(self):
        if self._gazetteer is None:
            self._gazetteer = load_gazetteer(self.cfg.paths.gazetteer)
        return self._gazetteer

    def need(self, rel: str, producer: str) -> Path:
        p = self.store.root / rel
        if not p.exists():
            raise UpstreamMissing(rel, producer)
        return p

    def need_path(self, key: str) -> Path:
        p = getattr(self.cfg.paths, key)
        if p is None:
            raise ConfigError(f"[paths] {key} is required for this command")
        return p

    def selected_events(self, keys) -> list[int]:
        present = sorted({eid for _, eid in keys})
        if self.cfg.event_ids:
            unknown = set(self.cfg.event_ids) - set(self.events)
            if unknown:
                raise ConfigError(f"unknown event ids {sorted(unknown)}")
            return [e for e in present if e in self.cfg.event_ids]
        return present

    def labels(self) -> dict[tuple[str, int], dict[str, str]]:
        gt = load_ground_truth(self.need(GROUND_TRUTH, "ground-truth"))
        keep = set(self.selected_events(gt))
        return {k: v for k, v in gt.items() if k[1] in keep}

    def county_event(self, fips: str, eid: int) -> CountyEvent:
        county = self.gazetteer.counties.get(fips)
        if county is None:
            raise DataError(f"FIPS {fips} is not in the gazetteer")
        return CountyEvent(county, self.events[eid])

    def finish(self, manifest, outputs, inputs=(), status="ok") -> None:
        self.store.record_inputs(manifest, [p for p in inputs if p is not None])
        self.store.record_outputs(manifest, outputs)
        self.store.finish(manifest, manifest.command + self.suffix, status)


# -- clients -----------------------------------------------------------------------------------

def make_news_client(cfg: PipelineConfig):
    if cfg.news.client == "stub":
        if cfg.news.stub_responses is None:
            raise ConfigError("[news] stub_responses is required for the stub client")
        return StubNewsClient.from_json(cfg.news.stub_responses)
    try:
        return GNewsClient(cfg.news.endpoint, cfg.news.api_key_env, cfg.news.rate_limit_per_minute)
    except ValueError as exc:
        raise ConfigError(f"[news] {exc}") from None


def make_chat_client(cfg: PipelineConfig):
    if cfg.chat.client == "heuristic":
        return heuristic_client()
    c = cfg.chat
    try:
        return HTTPChatClient(ChatConfig(c.endpoint, c.model, c.api_key_env, 0.0, c.max_tokens, c.timeout,
                                         c.retries, c.token_budget))
    except ValueError as exc:
        raise ConfigError(f"[chat] {exc}") from None


# -- commands ----------------------------------------------------------------------------------

def cmd_ground_truth(ctx: Context) -> int:
    loss = ctx.need_path("loss_records")
    records = load_loss_records(loss, ctx.gazetteer.counties, ctx.events)
    log.info("ground truth: %d county-events", len(records))
    if ctx.dry_run:
        return EXIT_OK
    m = ctx.store.begin("ground-truth", ctx.cfg.config_hash)
    out = ctx.store.root / GROUND_TRUTH
    save_ground_truth([ground_truth(r) for r in records], out)
    ctx.finish(m, [out], [loss, ctx.cfg.paths.events, ctx.cfg.paths.gazetteer])
    return EXIT_OK


def _merge_corpus(ctx, path: Path, fetched, event, chat, transcript_path: Path):
    """Add new documents to a corpus file, judging only the new ones."""
    existing = load_corpus(path, ctx.events).documents if path.exists() else []
    known = {d.doc_id for d in existing}
    new, seen = [], set()
    for d in fetched:
        if d.doc_id not in known and d.doc_id not in seen:
            seen.add(d.doc_id)
            new.append(d)
    transcript = Transcript.load(transcript_path) if transcript_path.exists() else Transcript()
    if new:
        marked = mark_keyword_hits(new, hazard_keywords(event.hazard_type, ctx.cfg.keywords))
        hits = [d for d in marked if d.keyword_hit]
        judged = {d.doc_id: d for d in judge_relevance(hits, event.summary or event.name, chat, transcript,
                                                       ctx.cfg.chat.retries)}
        new = [judged.get(d.doc_id, d) for d in marked]
    docs = sorted(existing + new, key=lambda d: (d.county_event.key, d.published_at, d.doc_id))
    persist_corpus(docs, path)
    transcript.dump(transcript_path)
    return len(new), len(fetched) - len(new)


def _ingest(ctx: Context, source: str, fetch_for: Callable):
    """Returns (outputs, manifest, partial), or None on a dry run."""
    labels = ctx.labels()
    chat = make_chat_client(ctx.cfg)
    events = ctx.selected_events(labels)
    if ctx.dry_run:
        log.info("would ingest %s for events %s", source, events)
        return None
    m = ctx.store.begin(f"ingest-{source}", ctx.cfg.config_hash)
    ctx.store.check_upstream([GROUND_TRUTH], ctx.cfg.config_hash)
    corpus_dir = ctx.store.dir("corpus")
    outputs, partial = [], False
    for eid in events:
        event = ctx.events[eid]
        fetched = []
        for fips in sorted(f for f, e in labels if e == eid):
            try:
                fetched.extend(fetch_for(ctx.county_event(fips, eid)))
            except FetchError as exc:
                log.error("%s %s:%d: %s", source, fips, eid, exc)
                partial = True
        path = corpus_dir / f"{source}_event{eid}.jsonl"
        tpath = corpus_dir / f"{source}_event{eid}.transcript.jsonl"
        added, skipped = _merge_corpus(ctx, path, fetched, event, chat, tpath)
        m.notes[str(eid)] = {"new_documents": added, "skipped_existing": skipped}
        log.info("%s event %d: %d new, %d already stored", source, eid, added, skipped)
        outputs += [path, path.with_name(path.name + ".manifest.json"), tpath]
    return outputs, m, partial


def cmd_ingest_news(ctx: Context) -> int:
    client = make_news_client(ctx.cfg)  # fail fast on misconfiguration

    def fetch_for(ce):
        spec = QuerySpec(tuple(hazard_keywords(ce.event.hazard_type, ctx.cfg.keywords)), ce.county.short_name,
                         news_window(ce.event))
        return fetch_news(build_news_query(spec), spec.date_window, client, ce, cap=ctx.cfg.news.cap,
                          page_size=ctx.cfg.news.page_size)

    res = _ingest(ctx, "news", fetch_for)
    if res is None:
        return EXIT_OK
    outputs, m, partial = res
    status = "partial" if partial else "ok"
    ctx.finish(m, outputs, [ctx.cfg.news.stub_responses, ctx.store.root / GROUND_TRUTH], status)
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_ingest_social(ctx: Context) -> int:
    subs, archive = ctx.need_path("subreddits"), ctx.need_path("archive")
    mapping = map_subreddits(read_subreddit_list(subs), ctx.gazetteer)
    by_fips: dict[str, list[str]] = {}
    for mp in mapping.mappings:
        by_fips.setdefault(mp.county.fips, []).append(mp.subreddit)
    log.info("subreddits: %d mapped, %d skipped, %d multi-county", len(mapping.mappings), len(mapping.skipped),
             len(mapping.flagged))

    malformed = []

    def fetch_for(ce):
        docs = []
        for sub in sorted(by_fips.get(ce.county.fips, [])):
            res = read_social_archive(archive, sub, news_window(ce.event), ce)
            if res.malformed_lines and not malformed:
                log.warning("%s: %d malformed lines skipped", archive, res.malformed_lines)
                malformed.append(res.malformed_lines)
            docs.extend(res.documents)
        return docs

    res = _ingest(ctx, "social", fetch_for)
    if res is None:
        return EXIT_OK
    outputs, m, partial = res
    mpath = ctx.store.dir("corpus") / "subreddit_mappings.csv"
    save_subreddit_mappings(mapping, mpath)
    m.notes["malformed_archive_lines"] = malformed[0] if malformed else 0
    m.notes["subreddits"] = {"mapped": len(mapping.mappings), "skipped": len(mapping.skipped),
                             "flagged": len(mapping.flagged)}
    ctx.finish(m, outputs + [mpath], [subs, archive, ctx.store.root / GROUND_TRUTH])
    return EXIT_OK


def cmd_features(ctx: Context) -> int:
    rasters, masks = ctx.need_path("rasters"), ctx.need_path("masks")
    labels = ctx.labels()
    f = ctx.cfg.features
    pairs = [(fips, eid, ctx.events[eid].start_date, ctx.events[eid].end_date) for fips, eid in sorted(labels)]
    if ctx.dry_run:
        log.info("would compute %d county-events x windows %s", len(pairs), list(f.windows))
        return EXIT_OK
    m = ctx.store.begin("features", ctx.cfg.config_hash)
    ctx.store.check_upstream([GROUND_TRUTH], ctx.cfg.config_hash)
    run = compute_features(pairs, rasters, masks, f.windows, f.pre_offset_days, f.post_offset_days, f.workers)
    outputs = []
    for w in f.windows:
        p = ctx.store.dir("features") / f"features_w{w}.csv"
        write_feature_csv(run.rows[w], p)
        outputs.append(p)
    skip = ctx.store.dir("features") / "skipped.csv"
    with open(skip, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fips", "event_id", "window_days", "reason"])
        w.writerows(run.skipped)
    outputs.append(skip)
    for s in run.skipped:
        log.warning("skipped %s:%d window %d: %s", *s)
    m.notes["skipped"] = len(run.skipped)
    status = "partial" if run.skipped else "ok"
    ctx.finish(m, outputs, [rasters, masks, ctx.store.root / GROUND_TRUTH], status)
    return EXIT_PARTIAL if run.skipped else EXIT_OK


def cmd_train(ctx: Context) -> int:
    labels = ctx.labels()
    t = ctx.cfg.train
    features, upstream = {}, [GROUND_TRUTH]
    for w in ctx.cfg.features.windows:
        rel = f"features/features_w{w}.csv"
        p = ctx.store.root / rel
        features[w] = read_feature_csv(p) if p.exists() else None
        if p.exists():
            upstream.append(rel)
    if all(v is None for v in features.values()):
        raise UpstreamMissing(f"features/features_w{ctx.cfg.features.windows[0]}.csv", "features")
    if ctx.dry_run:
        log.info("would train %s on %d rows", list(t.models), len(labels))
        return EXIT_OK
    m = ctx.store.begin("train", ctx.cfg.config_hash)
    ctx.store.check_upstream(upstream, ctx.cfg.config_hash)
    configs = [replace(TABLE1_CONFIGS[name], seed=t.seed) for name in t.models]
    result = evaluate_sweep(features, labels, configs, SplitSpec(folds=t.folds, seed=t.seed), t.tasks,
                            baseline_draws=t.baseline_draws, workers=t.workers, per_event=t.per_event)
    outputs = write_sweep(result, ctx.store.dir("models"))
    ctx.finish(m, outputs, [ctx.store.root / r for r in upstream])
    absent = [w for w, v in features.items() if v is None]
    if absent:
        log.warning("windows without features: %s", absent)
    return EXIT_PARTIAL if absent else EXIT_OK


def _corpus_files(ctx: Context, events) -> list[Path]:
    out = []
    for source in ("news", "social"):
        for eid in events:
            p = ctx.store.dir("corpus") / f"{source}_event{eid}.jsonl"
            if p.exists():
                out.append(p)
    return out


def _relevant_documents(ctx: Context, events):
    files = _corpus_files(ctx, events)
    if not files:
        raise UpstreamMissing("corpus/news_event<id>.jsonl", "ingest-news")
    docs = []
    for p in files:
        docs.extend(load_corpus(p, ctx.events).relevant())
    return files, docs


def cmd_audit_sample(ctx: Context) -> int:
    labels = ctx.labels()
    events = ctx.selected_events(labels)
    files, docs = _relevant_documents(ctx, events)
    docs = [d for d in docs if d.source == "news"]
    if ctx.dry_run:
        return EXIT_OK
    m = ctx.store.begin("audit-sample", ctx.cfg.config_hash)
    samples = []
    for eid in events:
        if any(d.county_event.event.event_id == eid for d in docs):
            samples.append(sample_audit(docs, eid, ctx.cfg.audit.sample_size, ctx.cfg.audit.seed))
        else:
            log.warning("no relevant news documents for event %d; nothing to audit", eid)
    out = ctx.store.dir("assessments") / "audit_sheet.csv"
    write_audit_sheet(samples, out, {d.doc_id: d for d in docs})
    ctx.finish(m, [out], files)
    return EXIT_OK if len(samples) == len(events) else EXIT_PARTIAL


def cmd_assess(ctx: Context) -> int:
    labels = ctx.labels()
    events = ctx.selected_events(labels)
    files, docs = _relevant_documents(ctx, events)
    chat = make_chat_client(ctx.cfg)
    if ctx.dry_run:
        log.info("would assess %d relevant documents", len(docs))
        return EXIT_OK
    m = ctx.store.begin("assess", ctx.cfg.config_hash)
    ctx.store.check_upstream([p.relative_to(ctx.store.root).as_posix() for p in files], ctx.cfg.config_hash)
    adir = ctx.store.dir("assessments")
    ckpt, tpath = adir / "checkpoint.jsonl", adir / "transcript.jsonl"
    transcript = Transcript.load(tpath) if ckpt.exists() and tpath.exists() else Transcript()
    if not ckpt.exists() and tpath.exists():
        tpath.unlink()
    run = assess_corpus(docs, chat, ckpt, transcript, ctx.cfg.chat.retries, ctx.cfg.chat.token_budget,
                        ctx.cfg.chat.merge_sources, ctx.events)
    transcript.dump(tpath)
    out_csv, out_sum, out_log = adir / "assessments.csv", adir / "summaries.jsonl", adir / "run_log.json"
    write_assessments(run.assessments, out_csv)
    write_summaries(run.summaries, out_sum)
    with open(out_log, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({**run.log, "model": chat.model_name, "tokens_total": transcript.tokens},
                           indent=2, sort_keys=True) + "\n")
    outputs = [out_csv, out_sum, out_log, tpath]
    if run.interrupted:
        outputs.append(ckpt)
        log.error("assessment interrupted; re-run `countyimpact assess` to resume")
    elif ckpt.exists():
        ckpt.unlink()
    partial = run.interrupted or bool(run.failures)
    ctx.finish(m, outputs, files, "partial" if partial else "ok")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_evaluate(ctx: Context) -> int:
    labels = ctx.labels()
    partial = False
    upstream = [GROUND_TRUTH]
    a_path = ctx.store.root / ASSESSMENTS
    if a_path.exists():
        keep = set(ctx.selected_events(labels))
        assessments = [r for r in read_assessments(a_path) if r["event_id"] in keep]
        upstream.append(ASSESSMENTS)
    else:
        log.warning("no assessments (run `countyimpact assess`); report has model-sweep cells only")
        assessments, partial = [], True
    s_path = ctx.store.root / SWEEP_SUMMARY
    if s_path.exists():
        sweep = read_sweep_summary(s_path)
        upstream.append(SWEEP_SUMMARY)
    else:
        log.warning("no sweep results (run `countyimpact train`)")
        sweep, partial = [], True
    audits = []
    if ctx.cfg.paths.audit_sheet is not None:
        for eid, s in sorted(read_audit_sheet(ctx.cfg.paths.audit_sheet).items()):
            missing = [i for i in s.doc_ids if i not in s.verdicts]
            if missing:
                log.warning("audit event %d lacks verdicts for %s", eid, ", ".join(missing))
                partial = True
            else:
                audits.append(s)
    perceptions = read_assessments(ctx.cfg.paths.perception) if ctx.cfg.paths.perception else []
    if ctx.dry_run:
        return EXIT_OK
    m = ctx.store.begin("evaluate", ctx.cfg.config_hash)
    ctx.store.check_upstream(upstream, ctx.cfg.config_hash)
    report = build_report(assessments, labels, sweep, audits, perceptions)
    outputs = write_report(report, ctx.store.dir("reports"))
    for o in report.orphans:
        log.warning("orphaned key %s (%s/%s) has no ground truth", o["key"], o["model"], o["source"])
    partial = partial or report.partial
    ctx.finish(m, outputs, [ctx.store.root / r for r in upstream]
               + [ctx.cfg.paths.audit_sheet, ctx.cfg.paths.perception], "partial" if partial else "ok")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_run_all(ctx: Context) -> int:
    cfg = ctx.cfg
    steps = [("ground-truth", cmd_ground_truth)]
    if cfg.news.client == "gnews" or cfg.news.stub_responses is not None:
        steps.append(("ingest-news", cmd_ingest_news))
    if cfg.paths.subreddits is not None and cfg.paths.archive is not None:
        steps.append(("ingest-social", cmd_ingest_social))
    if cfg.paths.rasters is not None and cfg.paths.masks is not None:
        steps += [("features", cmd_features), ("train", cmd_train)]
    if len(steps) > 1 and steps[1][0].startswith("ingest"):
        steps += [("audit-sample", cmd_audit_sample), ("assess", cmd_assess)]
    steps.append(("evaluate", cmd_evaluate))
    worst = EXIT_OK
    for name, fn in steps:
        log.info("== %s", name)
        if ctx.dry_run and name != "ground-truth":
            log.info("(dry run: later steps depend on earlier outputs)")
            break
        code = fn(ctx)
        worst = max(worst, code)
    return worst


COMMANDS: dict[str, Callable[[Context], int]] = {
    "ground-truth": cmd_ground_truth,
    "ingest-news": cmd_ingest_news,
    "ingest-social": cmd_ingest_social,
    "features": cmd_features,
    "train": cmd_train,
    "audit-sample": cmd_audit_sample,
    "assess": cmd_assess,
    "evaluate": cmd_evaluate,
    "run-all": cmd_run_all,
}

_HELP = {
    "ground-truth": "bucket offline loss records into severity labels",
    "ingest-news": "fetch, filter and store news articles per county-event",
    "ingest-social": "read subreddit posts from the archive per county-event",
    "features": "composite rasters and write 81-feature transition CSVs per window",
    "train": "cross-validated model sweep over buffer windows",
    "audit-sample": "draw the manual geolocation/relevance audit sheet",
    "assess": "two-phase media assessment with the configured chat client",
    "evaluate": "assemble the report bundle",
    "run-all": "run every configured step in order",
}


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", required=True, help="pipeline INI file")
    common.add_argument("--events", type=_csv_ints, help="event ids, e.g. 2,9 (overrides [events] ids)")
    common.add_argument("--windows", type=_csv_ints, help="buffer windows in days (overrides [features])")
    common.add_argument("--store", help="store root (overrides [paths] store)")
    common.add_argument("--seed", type=int, help="split/model seed (overrides [train] seed)")
    common.add_argument("--workers", type=int, help="parallel workers for features and training")
    common.add_argument("--dry-run", action="store_true", help="validate config and inputs, write nothing")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    p = argparse.ArgumentParser(prog="countyimpact", description="County-level disaster impact pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_HELP[name])
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config)
        overrides = {"event_ids": args.events, "windows": args.windows, "store": args.store, "seed": args.seed,
                     "workers": args.workers}
        cfg = with_overrides(cfg, **overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    suffix = ""
    if args.events:
        suffix += "-events-" + "-".join(map(str, args.events))
    if args.windows:
        suffix += "-windows-" + "-".join(map(str, args.windows))
    store = DatasetStore(cfg.paths.store)
    ctx = Context(cfg, store, dry_run=args.dry_run, suffix=suffix)
    lock = None
    try:
        if not args.dry_run:
            lock = store.lock()
            store.init()
        return COMMANDS[args.command](ctx)
    except (ConfigError, DataError, StoreLocked) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except UpstreamMissing as exc:
        log.error("%s", exc)
        return EXIT_UPSTREAM
    finally:
        if lock is not None:
            lock.release()


if __name__ == "__main__":
    sys.exit(main())
