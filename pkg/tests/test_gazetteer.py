import pytest
from hypothesis import given, strategies as st

from countyimpact.core import CountyRef, HazardType
from countyimpact.gazetteer import (
    AmbiguousPlaceError, Gazetteer, GazetteerEntry, QuerySpec, build_news_queries, build_news_query,
    clean_subreddit, hazard_keywords, levenshtein, map_subreddits, normalize_place, resolve_place,
)

from conftest import day

UNRESOLVABLE = ["xyzzyqwert", "pics", "askreddit", "qqqqqqqqzz"]
WINDOW = (day(2017, 2, 3), day(2017, 3, 24))


def fixture_54(gaz):
    names = sorted({e.place_name.replace(" ", "") for e in gaz.entries})[:50]
    return names + UNRESOLVABLE


def test_fortlauderdale(gazetteer):
    c = resolve_place("fortlauderdale", gazetteer)
    assert (c.name, c.state) == ("Broward County", "FL")


def test_fuzzy_typo_from_subreddit(gazetteer):
    m = gazetteer.lookup("r/fortlauderale".removeprefix("r/"))
    assert m.county.fips == "12011" and m.confidence == "fuzzy"


def test_austin_travis(gazetteer):
    c = resolve_place("austin", gazetteer)
    assert (c.name, c.state) == ("Travis County", "TX")


def test_no_match(gazetteer):
    assert resolve_place("xyzzyqwert", gazetteer) is None
    assert resolve_place("", gazetteer) is None


def test_population_tie_break_across_states(gazetteer):
    # Albany NY is more populous than Albany GA
    assert resolve_place("albany", gazetteer).state == "NY"


def _tie_gazetteer():
    return Gazetteer([
        GazetteerEntry("lakeside", CountyRef("06073", "San Diego County", "CA"), 100),
        GazetteerEntry("lakeside", CountyRef("48201", "Harris County", "TX"), 100),
        GazetteerEntry("lakewood", CountyRef("08031", "Denver County", "CO"), 100),
        GazetteerEntry("lakeford", CountyRef("12011", "Broward County", "FL"), 100),
    ])


def test_equal_population_is_ambiguous():
    gaz = _tie_gazetteer()
    with pytest.raises(AmbiguousPlaceError) as exc:
        resolve_place("lakeside", gaz)
    assert {c.state for c in exc.value.candidates} == {"CA", "TX"}
    # fuzzy tie: one edit from both lakewood and lakeford
    with pytest.raises(AmbiguousPlaceError):
        resolve_place("lakeword", gaz)


def test_multi_county_place_is_flagged(gazetteer):
    result = map_subreddits(["houston", "miami"], gazetteer)
    assert [m.county.fips for m in result.mappings] == ["48201", "12086"]
    assert [s for s, _ in result.flagged] == ["houston"]
    assert result.skipped == []


def test_54_subreddits(gazetteer):
    names = fixture_54(gazetteer)
    assert len(names) == 54
    result = map_subreddits(names, gazetteer)
    assert len(result.mappings) >= 50
    assert sorted(s for s, _ in result.skipped) == sorted(UNRESOLVABLE)
    assert all(reason for _, reason in result.skipped)


def test_empty_and_duplicates(gazetteer):
    assert map_subreddits([], gazetteer).mappings == []
    r = map_subreddits(["SantaRosa", "r/santarosa", "santarosa", "/r/SantaRosa"], gazetteer)
    assert [(m.subreddit, m.county.fips) for m in r.mappings] == [("santarosa", "06097")]


def test_clean_subreddit():
    assert clean_subreddit("r/Stockton") == "stockton"
    assert clean_subreddit(" /r/FortLauderdale ") == "fortlauderdale"


sub_names = st.lists(st.one_of(st.sampled_from(["Miami", "r/tampa", "houston", "austin", "xyzzyqwert",
                                                "SantaRosa", "napa", "pics", "albany", "ventura"]),
                               st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=10)),
                     max_size=30)


@given(sub_names)
def test_mapping_accounting_and_integrity(names):
    gaz = Gazetteer.bundled()
    result = map_subreddits(names, gaz)
    dedup = {clean_subreddit(n) for n in names} - {""}
    assert len(result.mappings) + len(result.skipped) == len(dedup)
    for m in result.mappings:
        assert gaz.counties[m.county.fips] == m.county
    assert {s for s, _ in result.flagged} <= {m.subreddit for m in result.mappings}


@given(st.sampled_from(["FortLauderdale", "fort lauderdale", "Fort-Lauderdale!", "FORT  lauderdale",
                        "fort.lauderdale"]))
def test_case_and_punctuation_insensitive(name):
    gaz = Gazetteer.bundled()
    assert resolve_place(name, gaz) == resolve_place("fort lauderdale", gaz)


@given(st.text(max_size=20), st.text(max_size=20))
def test_levenshtein_symmetric_and_bounded(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
    assert (d == 0) == (a == b)
    assert levenshtein(a, b, limit=2) == min(d, 3)


def test_normalize_place():
    assert normalize_place("  St. Petersburg ") == "st petersburg"
    with pytest.raises(ValueError):
        GazetteerEntry("Miami", CountyRef("12086", "Miami-Dade County", "FL"))


def test_hazard_keywords():
    assert "flood" in hazard_keywords(HazardType.FLOOD)
    assert "hurricane" in hazard_keywords("hurricane")
    assert hazard_keywords("flood") == hazard_keywords("flood")
    assert hazard_keywords("flood", {"flood": ["deluge"]}) == ["deluge"]
    with pytest.raises(ValueError):
        hazard_keywords("volcano")


def test_query_examples():
    assert build_news_query(QuerySpec(["flood"], "Merced", WINDOW)) == "flood Merced"
    assert build_news_queries(QuerySpec(["a", "b"], "X", WINDOW)) == ["a X", "b X"]
    assert build_news_query(QuerySpec(["flood"], "San Diego", WINDOW)) == 'flood "San Diego"'
    assert build_news_query(QuerySpec(["a", "b"], "X", WINDOW)) == "a X OR b X"


def test_query_spec_invariants():
    with pytest.raises(ValueError):
        QuerySpec([], "X", WINDOW)
    with pytest.raises(ValueError):
        QuerySpec(["a"], "X", (WINDOW[1], WINDOW[0]))
