"""News and social-archive ingestion, keyword pre-filtering and corpus files.

A corpus is a JSONL file of :class:`MediaDocument` records plus a sidecar
``<corpus>.manifest.json`` whose counts must be reproducible from the records.
Every fetched document is stored, including those rejected by the filters, so
the per-stage pass counts can be recomputed on load.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .core import DEFAULT_EVENTS, CountyEvent, CountyRef, EventRef

log = logging.getLogger(__name__)

SOURCES = ("news", "social")
DEFAULT_RESULT_CAP = 100
NEWS_WINDOW_BEFORE_DAYS = 3
NEWS_WINDOW_AFTER_DAYS = 30


def _iso(ts: dt.datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> dt.datetime:
    ts = dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def make_doc_id(source: str, locator: str, title: str, published_at: dt.datetime) -> str:
    payload = "\x1f".join([source, locator, title, _iso(published_at)])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:24]


@dataclass(frozen=True)
class MediaDocument:
    doc_id: str
    source: str
    county_event: CountyEvent
    published_at: dt.datetime
    title: str
    body: str
    url: str | None = None
    subreddit: str | None = None
    keyword_hit: bool = False
    llm_relevant: bool | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "social" and not self.subreddit:
            raise ValueError("social documents need a subreddit")
        if not (self.title or self.body):
            raise ValueError("document has neither title nor body")

    @classmethod
    def create(cls, source: str, county_event: CountyEvent, published_at: dt.datetime, title: str,
               body: str, url: str | None = None, subreddit: str | None = None) -> "MediaDocument":
        locator = url or subreddit or ""
        doc_id = make_doc_id(source, locator, title, published_at)
        return cls(doc_id, source, county_event, published_at.astimezone(dt.timezone.utc)
                   if published_at.tzinfo else published_at.replace(tzinfo=dt.timezone.utc),
                   title, body, url, subreddit)

    @property
    def text(self) -> str:
        return f"{self.title}\n\n{self.body}".strip()

    def to_json(self) -> dict:
        c = self.county_event.county
        return {
            "doc_id": self.doc_id,
            "source": self.source,
            "fips": c.fips,
            "county_name": c.name,
            "state": c.state,
            "event_id": self.county_event.event.event_id,
            "published_at": _iso(self.published_at),
            "title": self.title,
            "body": self.body,
            "url": self.url,
            "subreddit": self.subreddit,
            "keyword_hit": self.keyword_hit,
            "llm_relevant": self.llm_relevant,
        }

    @classmethod
    def from_json(cls, obj: dict, events: Mapping[int, EventRef] = DEFAULT_EVENTS) -> "MediaDocument":
        county = CountyRef(obj["fips"], obj["county_name"], obj["state"])
        return cls(
            doc_id=obj["doc_id"],
            source=obj["source"],
            county_event=CountyEvent(county, events[int(obj["event_id"])]),
            published_at=parse_timestamp(obj["published_at"]),
            title=obj["title"],
            body=obj["body"],
            url=obj.get("url"),
            subreddit=obj.get("subreddit"),
            keyword_hit=bool(obj.get("keyword_hit", False)),
            llm_relevant=obj.get("llm_relevant"),
        )


def dedupe(docs: Iterable[MediaDocument]) -> list[MediaDocument]:
    seen, out = set(), []
    for d in docs:
        if d.doc_id not in seen:
            seen.add(d.doc_id)
            out.append(d)
    return out


def news_window(event: EventRef, before_days: int = NEWS_WINDOW_BEFORE_DAYS,
                after_days: int = NEWS_WINDOW_AFTER_DAYS) -> tuple[dt.date, dt.date]:
    return (event.start_date - dt.timedelta(days=before_days),
            event.end_date + dt.timedelta(days=after_days))


# -- news client port ------------------------------------------------------------

class FetchError(RuntimeError):
    pass


class RateLimited(Exception):
    """Raised by a client when the server asks us to slow down."""

    def __init__(self, retry_after: float = 60.0):
        self.retry_after = retry_after
        super().__init__(f"rate limited; retry after {retry_after}s")


class RateLimiter:
    """Spaces calls at least ``60 / per_minute`` seconds apart, across threads."""

    def __init__(self, per_minute: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if per_minute <= 0:
            raise ValueError("rate limit must be positive")
        self.interval = 60.0 / per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = None

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            if self._next is not None and now < self._next:
                self._sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


@dataclass
class NewsPage:
    articles: list[dict]
    has_more: bool = False


class NewsClient(Protocol):
    rate_limiter: RateLimiter | None

    def search(self, query: str, start: dt.date, end: dt.date, page: int, page_size: int) -> NewsPage:
        ...


class GNewsClient:
    """HTTP adapter for the GNews search API."""

    def __init__(self, endpoint: str = "https://gnews.io/api/v4/search", api_key_env: str = "GNEWS_API_KEY",
                 rate_limit_per_minute: float = 60, lang: str = "en", country: str = "us",
                 timeout: float = 20.0, session=None):
        import requests

        key = os.environ.get(api_key_env)
        if not key:
            raise ValueError(f"environment variable {api_key_env} is not set")
        self.endpoint = endpoint
        self._key = key
        self.lang = lang
        self.country = country
        self.timeout = timeout
        self.session = session or requests.Session()
        self.rate_limiter = RateLimiter(rate_limit_per_minute)

    def search(self, query, start, end, page, page_size):
        resp = self.session.get(self.endpoint, timeout=self.timeout, params={
            "q": query, "lang": self.lang, "country": self.country, "max": page_size, "page": page,
            "from": f"{start.isoformat()}T00:00:00Z", "to": f"{end.isoformat()}T23:59:59Z",
            "apikey": self._key,
        })
        if resp.status_code == 429:
            raise RateLimited(float(resp.headers.get("Retry-After", 60)))
        resp.raise_for_status()
        payload = resp.json()
        articles = [
            {"title": a.get("title") or "", "body": a.get("content") or a.get("description") or "",
             "url": a.get("url"), "published_at": a.get("publishedAt")}
            for a in payload.get("articles", [])
        ]
        total = payload.get("totalArticles", 0)
        return NewsPage(articles, has_more=page * page_size < total and len(articles) == page_size)


class StubNewsClient:
    """Serves canned articles keyed by exact query string.

    ``responses`` maps query -> list of article dicts with keys title, body,
    url, published_at. Unknown queries return nothing. ``failures`` scripts a
    number of exceptions to raise before answering (for retry tests).
    """

    def __init__(self, responses: Mapping[str, Sequence[dict]], failures: Sequence[Exception] = (),
                 rate_limiter: RateLimiter | None = None):
        self.responses = {k: list(v) for k, v in responses.items()}
        self._failures = list(failures)
        self.rate_limiter = rate_limiter
        self.calls: list[tuple[str, int]] = []

    @classmethod
    def from_json(cls, path: str | Path) -> "StubNewsClient":
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def search(self, query, start, end, page, page_size):
        self.calls.append((query, page))
        if self._failures:
            raise self._failures.pop(0)
        items = [a for a in self.responses.get(query, [])
                 if start <= parse_timestamp(a["published_at"]).date() <= end]
        lo = (page - 1) * page_size
        return NewsPage(items[lo:lo + page_size], has_more=lo + page_size < len(items))


def _with_retries(fn, attempts: int, backoff: float, sleep):
    failures = 0
    while True:
        try:
            return fn()
        except RateLimited as exc:
            log.warning("rate limited, waiting %.1fs", exc.retry_after)
            sleep(exc.retry_after)
        except Exception as exc:  # transport errors of any adapter
            failures += 1
            if failures >= attempts:
                raise FetchError(f"giving up after {attempts} attempts: {exc}") from exc
            delay = backoff * 2 ** (failures - 1)
            log.warning("fetch failed (%s); retry %d in %.1fs", exc, failures, delay)
            sleep(delay)


def fetch_news(query: str, window: tuple[dt.date, dt.date], client: NewsClient,
               county_event: CountyEvent, cap: int = DEFAULT_RESULT_CAP, page_size: int = 10,
               attempts: int = 3, backoff: float = 1.0,
               sleep: Callable[[float], None] = time.sleep) -> list[MediaDocument]:
    """Page through search results for one query until exhausted or ``cap`` reached."""
    if not query.strip():
        raise ValueError("query must be nonempty")
    start, end = window
    docs: list[MediaDocument] = []
    page = 1
    while len(docs) < cap:
        limiter = getattr(client, "rate_limiter", None)
        if limiter is not None:
            limiter.acquire()
        result = _with_retries(lambda: client.search(query, start, end, page, page_size),
                               attempts, backoff, sleep)
        for a in result.articles:
            if not (a.get("title") or a.get("body")):
                continue
            docs.append(MediaDocument.create("news", county_event, parse_timestamp(a["published_at"]),
                                             a.get("title") or "", a.get("body") or "", url=a.get("url")))
        docs = dedupe(docs)
        if not result.has_more or not result.articles:
            break
        page += 1
    return docs[:cap]


# -- social archives -----------------------------------------------------------------

class ArchiveError(OSError):
    pass


@dataclass
class ArchiveReadResult:
    documents: list[MediaDocument]
    malformed_lines: int = 0


def read_social_archive(archive: str | Path, subreddit: str, window: tuple[dt.date, dt.date],
                        county_event: CountyEvent) -> ArchiveReadResult:
    """Select posts of one subreddit inside a date window from an NDJSON dump.

    Lines that are not JSON objects with ``created_utc``, ``subreddit``,
    ``title`` and ``selftext`` are counted and skipped.
    """
    start, end = window
    want = subreddit.lower()
    docs, bad = [], 0
    try:
        f = open(archive, encoding="utf-8")
    except OSError as exc:
        raise ArchiveError(f"cannot read archive {archive}: {exc}") from exc
    with f:
        for line in f:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                created = dt.datetime.fromtimestamp(float(rec["created_utc"]), tz=dt.timezone.utc)
                sub = str(rec["subreddit"])
                title, body = str(rec["title"]), str(rec["selftext"])
            except (ValueError, KeyError, TypeError, OverflowError):
                bad += 1
                continue
            if sub.lower() != want or not (start <= created.date() <= end):
                continue
            if not (title or body):
                continue
            url = rec.get("permalink")
            if url and url.startswith("/"):
                url = "https://www.reddit.com" + url
            docs.append(MediaDocument.create("social", county_event, created, title, body,
                                             url=url, subreddit=want))
    return ArchiveReadResult(dedupe(docs), bad)


# -- filters ---------------------------------------------------------------------------

def keyword_pattern(keywords: Sequence[str]) -> re.Pattern:
    if not keywords:
        raise ValueError("need at least one keyword")
    alts = sorted({re.escape(k.strip()) for k in keywords if k.strip()}, key=lambda s: (-len(s), s))
    return re.compile(r"\b(?:" + "|".join(alts) + r")\b", re.IGNORECASE)


def mark_keyword_hits(docs: Sequence[MediaDocument], keywords: Sequence[str]) -> list[MediaDocument]:
    pat = keyword_pattern(keywords)
    return [replace(d, keyword_hit=bool(pat.search(d.title) or pat.search(d.body))) for d in docs]


def keyword_filter(docs: Sequence[MediaDocument], keywords: Sequence[str]) -> list[MediaDocument]:
    return [d for d in mark_keyword_hits(docs, keywords) if d.keyword_hit]


def judge_relevance(docs: Sequence[MediaDocument], disaster_summary: str, llm, transcript=None,
                    retries: int = 2) -> list[MediaDocument]:
    """Set ``llm_relevant`` on every document (None when the verdict stayed unparseable)."""
    from .llm import relevance_verdict

    return [replace(d, llm_relevant=relevance_verdict(d, disaster_summary, llm, transcript, retries))
            for d in docs]


def relevance_filter(docs: Sequence[MediaDocument], disaster_summary: str, llm, transcript=None,
                     retries: int = 2) -> list[MediaDocument]:
    return [d for d in judge_relevance(docs, disaster_summary, llm, transcript, retries)
            if d.llm_relevant is True]


# -- corpus files ------------------------------------------------------------------------

class CorpusIntegrityError(ValueError):
    pass


@dataclass
class CorpusManifest:
    counts: dict[str, int] = field(default_factory=dict)
    date_ranges: dict[str, list[str]] = field(default_factory=dict)
    stages: dict[str, int] = field(default_factory=dict)

    @classmethod
    def of(cls, docs: Sequence[MediaDocument]) -> "CorpusManifest":
        m = cls()
        stages = dict.fromkeys(("fetched", "keyword_pass", "llm_relevant", "llm_rejected",
                                "undetermined"), 0)
        for d in docs:
            key = f"{d.source}|{d.county_event}"
            m.counts[key] = m.counts.get(key, 0) + 1
            day = d.published_at.date().isoformat()
            lo_hi = m.date_ranges.setdefault(key, [day, day])
            lo_hi[0], lo_hi[1] = min(lo_hi[0], day), max(lo_hi[1], day)
            stages["fetched"] += 1
            if d.keyword_hit:
                stages["keyword_pass"] += 1
                if d.llm_relevant is True:
                    stages["llm_relevant"] += 1
                elif d.llm_relevant is False:
                    stages["llm_rejected"] += 1
                else:
                    stages["undetermined"] += 1
        m.counts = dict(sorted(m.counts.items()))
        m.date_ranges = dict(sorted(m.date_ranges.items()))
        m.stages = stages
        return m

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Corpus:
    documents: list[MediaDocument]
    manifest: CorpusManifest

    def relevant(self) -> list[MediaDocument]:
        return [d for d in self.documents if d.keyword_hit and d.llm_relevant is True]


def manifest_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".manifest.json")


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def persist_corpus(docs: Sequence[MediaDocument], path: str | Path) -> CorpusManifest:
    ids = [d.doc_id for d in docs]
    if len(set(ids)) != len(ids):
        raise CorpusIntegrityError("duplicate doc_id in corpus")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in docs:
            f.write(_dumps(d.to_json()) + "\n")
    manifest = CorpusManifest.of(docs)
    with open(manifest_path(path), "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    return manifest


def load_corpus(path: str | Path, events: Mapping[int, EventRef] = DEFAULT_EVENTS) -> Corpus:
    path = Path(path)
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                docs.append(MediaDocument.from_json(json.loads(line), events))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusIntegrityError(f"{path}: line {lineno}: {exc}") from exc
    manifest = CorpusManifest.of(docs)
    mpath = manifest_path(path)
    if mpath.exists():
        with open(mpath, encoding="utf-8") as f:
            stored = json.load(f)
        if stored != manifest.to_json():
            raise CorpusIntegrityError(f"{path}: stored manifest does not match documents")
    return Corpus(docs, manifest)
