"""Place-name to county resolution and county-targeted news queries.

Subreddits such as ``r/fortlauderdale`` are geotagged by resolving their name
against a local gazetteer of ``place_name -> county`` rows. Matching is done on
a key with case, punctuation and whitespace removed, so ``FortLauderdale`` and
``fort lauderdale`` are the same place.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .core import CountyRef, DataError, HazardType

FUZZY_MAX_DISTANCE = 2
LEXICON_VERSION = "1"

GAZETTEER_COLUMNS = ("place_name", "fips", "county_name", "state", "population")

_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")
_SPACE = re.compile(r"\s+")


def normalize_place(name: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    return _SPACE.sub(" ", _PUNCT.sub("", name.lower())).strip()


def match_key(name: str) -> str:
    return normalize_place(name).replace(" ", "")


def levenshtein(a: str, b: str, limit: int | None = None) -> int:
    """Edit distance; returns ``limit + 1`` early once the bound is exceeded."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if limit is not None and len(a) - len(b) > limit:
        return limit + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if limit is not None and min(cur) > limit:
            return limit + 1
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class GazetteerEntry:
    place_name: str
    county: CountyRef
    population: int | None = None

    def __post_init__(self):
        if not self.place_name or self.place_name != normalize_place(self.place_name):
            raise ValueError(f"place_name must be nonempty and normalized: {self.place_name!r}")


class AmbiguousPlaceError(LookupError):
    def __init__(self, name: str, candidates: Sequence[CountyRef]):
        self.name = name
        self.candidates = tuple(candidates)
        listed = ", ".join(f"{c.name}, {c.state}" for c in self.candidates)
        super().__init__(f"{name!r} is ambiguous between {listed}")


@dataclass(frozen=True)
class PlaceMatch:
    """Outcome of a gazetteer lookup.

    ``county`` is None when nothing matched or when the match is ambiguous; in
    the latter case ``candidates`` lists the tied counties.
    """

    query: str
    county: CountyRef | None
    confidence: str | None = None  # "exact" or "fuzzy"
    multi_county: bool = False
    candidates: tuple[CountyRef, ...] = ()

    @property
    def ambiguous(self) -> bool:
        return self.county is None and len(self.candidates) > 1


class Gazetteer:
    """Read-only place index. Safe to share between threads once built."""

    def __init__(self, entries: Iterable[GazetteerEntry]):
        self.entries: tuple[GazetteerEntry, ...] = tuple(entries)
        self._by_key: dict[str, list[GazetteerEntry]] = {}
        self.counties: dict[str, CountyRef] = {}
        for e in self.entries:
            self._by_key.setdefault(match_key(e.place_name), []).append(e)
            known = self.counties.setdefault(e.county.fips, e.county)
            if known != e.county:
                raise ValueError(f"conflicting county rows for FIPS {e.county.fips}")

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Gazetteer":
        entries = []
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            missing = [c for c in GAZETTEER_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise DataError("missing column", path=str(path), row=1, column=missing[0])
            for i, row in enumerate(reader, start=2):
                try:
                    pop = row["population"].strip()
                    entries.append(GazetteerEntry(
                        place_name=normalize_place(row["place_name"]),
                        county=CountyRef(row["fips"].strip().zfill(5), row["county_name"].strip(),
                                         row["state"].strip().upper()),
                        population=int(pop) if pop else None,
                    ))
                except ValueError as exc:
                    raise DataError(str(exc), path=str(path), row=i) from exc
        return cls(entries)

    @classmethod
    def bundled(cls) -> "Gazetteer":
        with resources.as_file(resources.files("countyimpact") / "data" / "gazetteer.csv") as p:
            return cls.from_csv(p)

    # -- lookup -------------------------------------------------------------

    def _choose(self, rows: list[GazetteerEntry]) -> tuple[list[CountyRef], int, bool]:
        """Pick among rows sharing one key.

        Rows are grouped by state. Within a state the first row is the primary
        county (a city spanning several counties is flagged). Across states the
        most populous group wins. Returns (tied counties, population, multi).
        """
        by_state: dict[str, list[GazetteerEntry]] = {}
        for r in rows:
            by_state.setdefault(r.county.state, []).append(r)
        scored = []
        for group in by_state.values():
            primary = group[0]
            multi = len({g.county.fips for g in group}) > 1
            scored.append((primary.population or 0, primary.county, multi))
        best = max(s[0] for s in scored)
        top = [s for s in scored if s[0] == best]
        return [s[1] for s in top], best, any(s[2] for s in top)

    def lookup(self, name: str) -> PlaceMatch:
        key = match_key(name)
        if not key:
            return PlaceMatch(name, None)
        rows = self._by_key.get(key)
        if rows:
            counties, _, multi = self._choose(rows)
            if len(counties) > 1:
                return PlaceMatch(name, None, "exact", candidates=tuple(counties))
            return PlaceMatch(name, counties[0], "exact", multi_county=multi)

        best_d = FUZZY_MAX_DISTANCE + 1
        near: list[str] = []
        for k in self._by_key:
            d = levenshtein(key, k, FUZZY_MAX_DISTANCE)
            if d < best_d:
                best_d, near = d, [k]
            elif d == best_d:
                near.append(k)
        if best_d > FUZZY_MAX_DISTANCE:
            return PlaceMatch(name, None)

        pooled: dict[str, tuple[int, CountyRef, bool]] = {}
        for k in near:
            counties, pop, multi = self._choose(self._by_key[k])
            for c in counties:
                if c.fips not in pooled or pooled[c.fips][0] < pop:
                    pooled[c.fips] = (pop, c, multi)
        top_pop = max(p for p, _, _ in pooled.values())
        top = sorted((v for v in pooled.values() if v[0] == top_pop), key=lambda v: v[1].fips)
        if len(top) > 1:
            return PlaceMatch(name, None, "fuzzy", candidates=tuple(v[1] for v in top))
        return PlaceMatch(name, top[0][1], "fuzzy", multi_county=top[0][2])


def load_gazetteer(path: str | Path | None = None) -> Gazetteer:
    return Gazetteer.bundled() if path is None else Gazetteer.from_csv(path)


def resolve_place(name: str, gazetteer: Gazetteer) -> CountyRef | None:
    """County for a place name, or None.

    Raises :class:`AmbiguousPlaceError` when the best candidates tie on
    population.
    """
    m = gazetteer.lookup(name)
    if m.ambiguous:
        raise AmbiguousPlaceError(name, m.candidates)
    return m.county


# -- subreddits ---------------------------------------------------------------

@dataclass(frozen=True)
class SubredditMapping:
    subreddit: str
    county: CountyRef
    confidence: str

    def __post_init__(self):
        if not self.subreddit:
            raise ValueError("subreddit must be nonempty")


@dataclass
class SubredditMapResult:
    mappings: list[SubredditMapping] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    # mapped, but the place spans several counties; primary county was used
    flagged: list[tuple[str, str]] = field(default_factory=list)


def clean_subreddit(name: str) -> str:
    name = name.strip()
    if name.lower().startswith("/r/"):
        name = name[3:]
    elif name.lower().startswith("r/"):
        name = name[2:]
    return name.strip().lower()


def read_subreddit_list(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [ln.strip() for ln in f if ln.strip() and not ln.lstrip().startswith("#")]


def map_subreddits(names: Iterable[str], gazetteer: Gazetteer) -> SubredditMapResult:
    out = SubredditMapResult()
    seen = set()
    for raw in names:
        sub = clean_subreddit(raw)
        if not sub or sub in seen:
            continue
        seen.add(sub)
        m = gazetteer.lookup(sub)
        if m.ambiguous:
            listed = "; ".join(f"{c.name}, {c.state}" for c in m.candidates)
            out.skipped.append((sub, f"ambiguous: {listed}"))
        elif m.county is None:
            out.skipped.append((sub, "no gazetteer match"))
        else:
            out.mappings.append(SubredditMapping(sub, m.county, m.confidence))
            if m.multi_county:
                out.flagged.append((sub, f"multi-county place; assigned {m.county.name}, {m.county.state}"))
    return out


def save_subreddit_mappings(result: SubredditMapResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["subreddit", "fips", "county_name", "state", "confidence", "status", "reason"])
        for m in result.mappings:
            reason = dict(result.flagged).get(m.subreddit, "")
            w.writerow([m.subreddit, m.county.fips, m.county.name, m.county.state, m.confidence,
                        "mapped", reason])
        for sub, reason in result.skipped:
            w.writerow([sub, "", "", "", "", "skipped", reason])


# -- keywords and queries -------------------------------------------------------

_LEXICON: dict[HazardType, tuple[str, ...]] = {
    HazardType.FLOOD: ("flood", "flooding", "storm", "levee", "rain"),
    HazardType.HURRICANE: ("hurricane", "storm", "flooding", "evacuation"),
    HazardType.SEVERE_WEATHER: ("storm", "hail", "wind", "thunderstorm"),
    HazardType.TORNADO: ("tornado", "storm", "twister"),
    HazardType.WILDFIRE: ("wildfire", "fire", "evacuation", "smoke"),
}


def hazard_keywords(hazard_type: HazardType | str,
                    overrides: dict[str, Sequence[str]] | None = None) -> list[str]:
    """Keyword lexicon for a hazard type (version ``LEXICON_VERSION``)."""
    try:
        hazard = HazardType(hazard_type)
    except ValueError:
        raise ValueError(f"unknown hazard type {hazard_type!r}") from None
    if overrides and hazard.value in overrides:
        return list(overrides[hazard.value])
    return list(_LEXICON[hazard])


@dataclass(frozen=True)
class QuerySpec:
    keywords: tuple[str, ...]
    county_name: str
    date_window: tuple[dt.date, dt.date]

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if not self.keywords:
            raise ValueError("QuerySpec needs at least one keyword")
        if self.date_window[0] > self.date_window[1]:
            raise ValueError("date window start after end")


def _phrase(text: str) -> str:
    text = text.strip()
    return f'"{text}"' if " " in text else text


def build_news_queries(spec: QuerySpec) -> list[str]:
    """One ``"<keyword> <county>"`` query per keyword, in keyword order."""
    county = _phrase(spec.county_name)
    return [f"{_phrase(kw)} {county}" for kw in spec.keywords]


def build_news_query(spec: QuerySpec) -> str:
    """All keyword queries joined with the search API's ``OR`` operator."""
    return " OR ".join(build_news_queries(spec))


# -- remote geocoder port ---------------------------------------------------------

class NominatimGeocoder:
    """Resolve place names through a Nominatim-compatible search endpoint.

    The returned county is matched back onto the gazetteer's county table so
    results stay keyed by FIPS. Intended for parity checks against the offline
    gazetteer, not for the default pipeline.
    """

    def __init__(self, gazetteer: Gazetteer, endpoint: str = "https://nominatim.openstreetmap.org/search",
                 session=None, user_agent: str = "countyimpact/0.1", timeout: float = 10.0):
        import requests

        self.gazetteer = gazetteer
        self.endpoint = endpoint
        self.session = session or requests.Session()
        self.user_agent = user_agent
        self.timeout = timeout
        self._by_name = {(normalize_place(c.name), c.state): c for c in gazetteer.counties.values()}

    def resolve(self, name: str) -> CountyRef | None:
        resp = self.session.get(
            self.endpoint,
            params={"q": name, "format": "jsonv2", "addressdetails": 1, "countrycodes": "us", "limit": 1},
            headers={"User-Agent": self.user_agent},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        hits = resp.json()
        if not hits:
            return None
        address = hits[0].get("address", {})
        county = address.get("county")
        iso = address.get("ISO3166-2-lvl4", "")
        if not county or not iso.startswith("US-"):
            return None
        return self._by_name.get((normalize_place(county), iso[3:]))
