import datetime as dt
import json
import re

import pytest
from hypothesis import given, strategies as st

from countyimpact.llm import StubChatClient, Transcript
from countyimpact.media import (
    ArchiveError, CorpusIntegrityError, CorpusManifest, FetchError, MediaDocument, RateLimited,
    RateLimiter, StubNewsClient, dedupe, fetch_news, judge_relevance, keyword_filter, load_corpus, make_doc_id,
    manifest_path, news_window, persist_corpus, read_social_archive, relevance_filter,
)

from conftest import county_event, day

CE = county_event("06047", "Merced County", "CA", 2)
WINDOW = news_window(CE.event)
UTC = dt.timezone.utc


def article(i, title=None, body="Flood waters rose.", when="2017-02-10T12:00:00Z"):
    return {"title": title or f"Article {i}", "body": body, "url": f"https://news.test/{i}",
            "published_at": when}


def doc(i, body="The storm hit", title="", source="news", minute=0):
    return MediaDocument.create(source, CE, dt.datetime(2017, 2, 10, 12, minute, tzinfo=UTC),
                                title or f"t{i}", body, url=f"https://x.test/{i}",
                                subreddit="merced" if source == "social" else None)


def test_fetch_three_articles():
    client = StubNewsClient({"flood Merced": [article(i) for i in range(3)]})
    docs = fetch_news("flood Merced", WINDOW, client, CE)
    assert len(docs) == 3
    assert all(d.county_event == CE and d.source == "news" for d in docs)


def test_fetch_deduplicates():
    a = article(1)
    client = StubNewsClient({"q": [a, dict(a), article(2), dict(a)]})
    docs = fetch_news("q", WINDOW, client, CE, page_size=2)
    assert len(docs) == len({d.doc_id for d in docs}) == 2


def test_fetch_paginates_to_cap():
    client = StubNewsClient({"q": [article(i) for i in range(35)]})
    assert len(fetch_news("q", WINDOW, client, CE, cap=100, page_size=10)) == 35
    assert [p for _, p in client.calls] == [1, 2, 3, 4]
    assert len(fetch_news("q", WINDOW, client, CE, cap=12, page_size=10)) == 12


def test_fetch_7000_manifest_total():
    queries = {f"q{k}": [article(f"{k}-{i}") for i in range(100)] for k in range(70)}
    client = StubNewsClient(queries)
    docs = []
    for q in queries:
        docs += fetch_news(q, WINDOW, client, CE, cap=100, page_size=50)
    assert CorpusManifest.of(dedupe(docs)).total == 7000


def test_fetch_retries_then_fails():
    sleeps = []
    ok = StubNewsClient({"q": [article(1)]}, failures=[OSError("boom"), OSError("boom")])
    assert len(fetch_news("q", WINDOW, ok, CE, sleep=sleeps.append)) == 1
    assert sleeps == [1.0, 2.0]
    bad = StubNewsClient({"q": [article(1)]}, failures=[OSError("x")] * 3)
    with pytest.raises(FetchError):
        fetch_news("q", WINDOW, bad, CE, sleep=lambda s: None)


def test_fetch_rate_limited_waits_and_resumes():
    sleeps = []
    client = StubNewsClient({"q": [article(1)]}, failures=[RateLimited(7), RateLimited(7), RateLimited(7)])
    assert len(fetch_news("q", WINDOW, client, CE, sleep=sleeps.append)) == 1
    assert sleeps == [7, 7, 7]


def test_fetch_rejects_empty_query():
    with pytest.raises(ValueError):
        fetch_news("  ", WINDOW, StubNewsClient({}), CE)


def test_rate_limiter_spacing():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    rl = RateLimiter(30, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        rl.acquire()
    assert slept == [2.0, 2.0]


def _archive(tmp_path):
    def ts(y, m, d):
        return dt.datetime(y, m, d, 15, tzinfo=UTC).timestamp()

    lines = [json.dumps({"created_utc": ts(2017, 2, 8 + i), "subreddit": "Merced", "title": f"p{i}",
                         "selftext": "flooding downtown"}) for i in range(5)]
    lines += [
        json.dumps({"created_utc": ts(2017, 2, 9), "subreddit": "fresno", "title": "other", "selftext": "x"}),
        json.dumps({"created_utc": ts(2016, 6, 1), "subreddit": "merced", "title": "old", "selftext": "x"}),
        "{not json",
        json.dumps({"created_utc": ts(2017, 2, 9), "subreddit": "merced"}),
    ]
    p = tmp_path / "archive.ndjson"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_archive_planted_records(tmp_path):
    res = read_social_archive(_archive(tmp_path), "MERCED", WINDOW, CE)
    assert sorted(d.title for d in res.documents) == [f"p{i}" for i in range(5)]
    assert all(d.subreddit == "merced" and d.source == "social" for d in res.documents)
    assert res.malformed_lines == 2


def test_archive_zero_overlap(tmp_path):
    res = read_social_archive(_archive(tmp_path), "merced", (day(2019, 1, 1), day(2019, 2, 1)), CE)
    assert res.documents == []


def test_archive_unreadable(tmp_path):
    with pytest.raises(ArchiveError):
        read_social_archive(tmp_path / "missing.ndjson", "merced", WINDOW, CE)


def test_keyword_filter_examples():
    kept = keyword_filter([doc(1, "The storm hit"), doc(2, "restorm"), doc(3, "calm", title="STORM!")],
                          ["storm"])
    assert [d.title for d in kept] == ["t1", "STORM!"]
    assert all(d.keyword_hit for d in kept)
    assert keyword_filter([], ["storm"]) == []
    with pytest.raises(ValueError):
        keyword_filter([doc(1)], [])


def _scripted(verdicts):
    def respond(system, user):
        doc_id = re.search(r"doc_id: (\w+)", user).group(1)
        return json.dumps({"relevant": verdicts[doc_id]})
    return StubChatClient(respond)


def test_relevance_filter_scripted():
    docs = [doc(i) for i in range(6)]
    script = {d.doc_id: ("yes" if i % 3 == 0 else "no") for i, d in enumerate(docs)}
    kept = relevance_filter(docs, "flooding in California", _scripted(script))
    assert [d.doc_id for d in kept] == [d.doc_id for i, d in enumerate(docs) if i % 3 == 0]
    assert all(d.llm_relevant is True for d in kept)


def test_relevance_prompt_carries_summary_and_text():
    client = _scripted({doc(1).doc_id: "yes"})
    relevance_filter([doc(1, "levee breach")], "atmospheric river storms", client)
    _, user = client.calls[0]
    assert "atmospheric river storms" in user and "levee breach" in user


def test_relevance_filter_empty_makes_no_calls():
    client = StubChatClient(lambda s, u: '{"relevant": "yes"}')
    assert relevance_filter([], "x", client) == []
    assert client.calls == []


def test_relevance_filter_all_unparseable():
    docs = [keyword_filter([doc(i)], ["storm"])[0] for i in range(4)]
    client = StubChatClient(lambda s, u: "maybe?")
    transcript = Transcript()
    judged = judge_relevance(docs, "x", client, transcript)
    assert [d for d in judged if d.llm_relevant] == []
    assert CorpusManifest.of(judged).stages["undetermined"] == 4
    assert len(client.calls) == 4 * 3


def test_doc_id_is_pure():
    when = dt.datetime(2017, 2, 10, 12, tzinfo=UTC)
    a = MediaDocument.create("news", CE, when, "t", "b1", url="u")
    b = MediaDocument.create("news", CE, when, "t", "different body", url="u")
    assert a.doc_id == b.doc_id == make_doc_id("news", "u", "t", when)
    assert a.doc_id != MediaDocument.create("social", CE, when, "t", "b", subreddit="u").doc_id


def test_document_invariants():
    when = dt.datetime(2017, 2, 10, tzinfo=UTC)
    with pytest.raises(ValueError):
        MediaDocument.create("social", CE, when, "t", "b")
    with pytest.raises(ValueError):
        MediaDocument.create("news", CE, when, "", "")
    with pytest.raises(ValueError):
        MediaDocument.create("radio", CE, when, "t", "b")


def test_corpus_round_trip_100(tmp_path):
    docs = [doc(i, body=f"body {i} é水", minute=i % 60) for i in range(100)]
    docs = [d if i % 2 else keyword_filter([d], ["body"])[0] for i, d in enumerate(docs)]
    p = tmp_path / "c.jsonl"
    manifest = persist_corpus(docs, p)
    corpus = load_corpus(p)
    assert corpus.documents == docs
    assert corpus.manifest == manifest and manifest.total == 100
    first = p.read_bytes()
    persist_corpus(corpus.documents, p)
    assert p.read_bytes() == first


def test_corpus_corrupted_line(tmp_path):
    p = tmp_path / "c.jsonl"
    persist_corpus([doc(i) for i in range(5)], p)
    lines = p.read_text().splitlines()
    lines[2] = lines[2][:-5]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusIntegrityError, match="line 3"):
        load_corpus(p)


def test_corpus_manifest_mismatch(tmp_path):
    p = tmp_path / "c.jsonl"
    persist_corpus([doc(i) for i in range(5)], p)
    p.write_text("".join(p.read_text().splitlines(keepends=True)[:4]))
    with pytest.raises(CorpusIntegrityError, match="manifest"):
        load_corpus(p)


def test_empty_corpus(tmp_path):
    p = tmp_path / "c.jsonl"
    m = persist_corpus([], p)
    assert p.read_text() == "" and manifest_path(p).exists() and m.total == 0
    assert load_corpus(p).documents == []


def test_duplicate_doc_ids_rejected(tmp_path):
    with pytest.raises(CorpusIntegrityError):
        persist_corpus([doc(1), doc(1)], tmp_path / "c.jsonl")


bodies = st.lists(st.sampled_from(["The storm hit", "restorm", "sunny day", "flood waters", "Storm."]),
                  max_size=20)


@given(bodies, st.lists(st.booleans(), min_size=20, max_size=20))
def test_pipeline_monotone_shrinking(texts, verdicts):
    docs = dedupe(doc(i, body=t) for i, t in enumerate(texts))
    kept = keyword_filter(docs, ["storm", "flood"])
    script = {d.doc_id: ("yes" if verdicts[i] else "no") for i, d in enumerate(docs)}
    relevant = relevance_filter(kept, "x", _scripted(script))
    assert len(relevant) <= len(kept) <= len(docs)
