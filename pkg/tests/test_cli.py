import csv
import json
import shutil

import pytest
from sklearn.metrics import f1_score

from conftest import MINI
from countyimpact.cli import main
from countyimpact.store import DatasetStore

FAST_TRAIN = "models = logistic, random_forest, gbt, mlp_1, mlp_2, mlp_5"


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="session")
def full_run(tmp_path_factory):
    store = tmp_path_factory.mktemp("full") / "store"
    code = main(["run-all", "-c", str(MINI / "config.ini"), "--store", str(store), "-q"])
    return code, store


@pytest.fixture
def mini_copy(tmp_path):
    """Writable copy of the mini dataset; returns (dir, write_config)."""
    root = tmp_path / "mini"
    shutil.copytree(MINI, root, ignore=shutil.ignore_patterns("store"))
    base = (root / "config.ini").read_text()

    def write_config(*swaps, name="config.ini"):
        text = base
        for old, new in swaps:
            assert old in text
            text = text.replace(old, new)
        path = root / name
        path.write_text(text)
        return path

    return root, write_config


def test_run_all_succeeds_and_writes_reports(full_run):
    code, store = full_run
    assert code == 0
    for name in ("table2", "table3", "figure3", "figure5", "orphans"):
        assert (store / "reports" / f"{name}.csv").exists()
    assert read_rows(store / "reports" / "orphans.csv") == []
    assert DatasetStore(store).orphans() == []
    assert all(m.status == "ok" for m in DatasetStore(store).manifests())


def test_table3_replays_from_provenance(full_run):
    """Recompute every table3 cell from the stored assessments and ground truth."""
    _, store = full_run
    truth = {(r["fips"], int(r["event_id"])): r for r in read_rows(store / "features" / "ground_truth.csv")}
    pred = {(r["fips"], int(r["event_id"]), r["source"], r["model"]): r
            for r in read_rows(store / "assessments" / "assessments.csv")}
    rows = read_rows(store / "reports" / "table3.csv")
    assert rows
    for row in rows:
        groups = dict(part.split("=") for part in row["provenance"].split(";"))
        for eid, fips_list in groups.items():
            keys = [(f, int(eid)) for f in fips_list.split(",")]
            y_true = [truth[k][row["category"]] for k in keys]
            y_pred = [pred[k + (row["source"], row["model"])][row["category"]] for k in keys]
            expected = f1_score(y_true, y_pred, labels=sorted(set(y_true)), average="macro", zero_division=0)
            assert float(row[f"event_{eid}"]) == pytest.approx(expected, abs=1e-6)


def test_manifests_cover_every_output(full_run):
    _, store = full_run
    ds = DatasetStore(store)
    for rel in ("features/ground_truth.csv", "models/sweep_summary.csv", "reports/table3.csv"):
        assert ds.producer_of(rel) is not None
    assert {m.command for m in ds.manifests()} >= {"ground-truth", "ingest-news", "ingest-social", "features",
                                                  "train", "audit-sample", "assess", "evaluate"}


def test_stub_news_writes_one_corpus_per_event(full_run):
    _, store = full_run
    assert sorted(p.name for p in (store / "corpus").glob("news_event[0-9].jsonl")) == \
        ["news_event2.jsonl", "news_event9.jsonl"]


def test_reingest_adds_nothing(mini_copy):
    root, write = mini_copy
    cfg = str(write())
    assert main(["ground-truth", "-c", cfg, "-q"]) == 0
    assert main(["ingest-news", "-c", cfg, "-q"]) == 0
    first = json.loads((root / "store" / "manifests" / "ingest-news.json").read_text())
    assert sum(n["new_documents"] for n in first["notes"].values()) > 0
    before = (root / "store" / "corpus" / "news_event2.jsonl").read_bytes()
    assert main(["ingest-news", "-c", cfg, "-q"]) == 0
    second = json.loads((root / "store" / "manifests" / "ingest-news.json").read_text())
    assert all(n["new_documents"] == 0 for n in second["notes"].values())
    assert (root / "store" / "corpus" / "news_event2.jsonl").read_bytes() == before


def test_gnews_without_key_names_variable(mini_copy, monkeypatch, capsys):
    _, write = mini_copy
    monkeypatch.delenv("CI_TEST_NEWS_KEY", raising=False)
    cfg = write(("client = stub\nstub_responses = news_stub.json",
                 "client = gnews\napi_key_env = CI_TEST_NEWS_KEY"))
    assert main(["ingest-news", "-c", str(cfg)]) == 2
    assert "CI_TEST_NEWS_KEY" in capsys.readouterr().err


def test_features_window_override(mini_copy):
    root, write = mini_copy
    cfg = str(write())
    assert main(["ground-truth", "-c", cfg, "-q"]) == 0
    assert main(["features", "-c", cfg, "--windows", "15,30", "-q"]) == 0
    made = sorted(p.name for p in (root / "store" / "features").glob("features_w*.csv"))
    assert made == ["features_w15.csv", "features_w30.csv"]
    for name in made:
        with open(root / "store" / "features" / name) as f:
            header = next(csv.reader(f))
        assert len(header) == 85
    assert (root / "store" / "manifests" / "features-windows-15-30.json").exists()


def test_missing_post_rasters_are_skipped(mini_copy):
    root, write = mini_copy
    for p in (root / "rasters" / "06007").glob("2017-1[12]-*.lcr"):
        p.unlink()
    cfg = str(write())
    assert main(["ground-truth", "-c", cfg, "-q"]) == 0
    assert main(["features", "-c", cfg, "-q"]) == 4
    skipped = read_rows(root / "store" / "features" / "skipped.csv")
    assert skipped and {(r["fips"], r["event_id"]) for r in skipped} == {("06007", "9")}
    assert len(skipped) == 4
    fdir = root / "store" / "features"
    snapshot = {p.name: p.read_bytes() for p in fdir.iterdir()}
    assert main(["features", "-c", cfg, "-q"]) == 4
    assert {p.name: p.read_bytes() for p in fdir.iterdir()} == snapshot
    assert DatasetStore(root / "store").producer_of("features/skipped.csv").status == "partial"


def test_evaluate_without_assessments_is_partial(mini_copy, capsys):
    root, write = mini_copy
    cfg = str(write((FAST_TRAIN, "models = logistic"), ("baseline_draws = 100000", "baseline_draws = 1000")))
    for cmd in ("ground-truth", "features", "train"):
        assert main([cmd, "-c", cfg, "-q", "--windows", "15,30"]) == 0
    assert main(["evaluate", "-c", cfg, "--windows", "15,30"]) == 4
    assert "no assessments" in capsys.readouterr().err
    rows = read_rows(root / "store" / "reports" / "figure3.csv")
    assert {r["model"] for r in rows} == {"logistic"} and len(rows) == 4
    assert read_rows(root / "store" / "reports" / "table3.csv") == []


def test_config_change_between_steps_warns(mini_copy, capsys):
    root, write = mini_copy
    assert main(["ground-truth", "-c", str(write()), "-q"]) == 0
    changed = write(("seed = 0\nbaseline", "seed = 1\nbaseline"), name="changed.ini")
    assert main(["features", "-c", str(changed), "--windows", "15"]) == 0
    assert "manifests disagree" in capsys.readouterr().err


def test_dry_run_writes_nothing(mini_copy):
    root, write = mini_copy
    assert main(["run-all", "-c", str(write()), "--dry-run", "-q"]) == 0
    assert not (root / "store").exists()


def test_held_lock_exits_2(mini_copy, capsys):
    root, write = mini_copy
    cfg = str(write())
    held = DatasetStore(root / "store").lock()
    try:
        assert main(["ground-truth", "-c", cfg]) == 2
    finally:
        held.release()
    assert "in use" in capsys.readouterr().err


def test_missing_upstream_exits_3(mini_copy, capsys):
    _, write = mini_copy
    assert main(["evaluate", "-c", str(write())]) == 3
    assert "ground-truth" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[paths]\nstore = s\n[train]\nmodels = svm\n")
    assert main(["ground-truth", "-c", str(cfg)]) == 2
    assert "svm" in capsys.readouterr().err
    assert main(["ground-truth", "-c", str(tmp_path / "absent.ini")]) == 2


def test_unknown_event_override_exits_2(mini_copy):
    _, write = mini_copy
    cfg = str(write())
    assert main(["ground-truth", "-c", cfg, "-q"]) == 0
    assert main(["features", "-c", cfg, "--events", "999", "-q"]) == 2
