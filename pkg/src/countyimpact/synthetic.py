"""Synthetic mini-dataset with a known answer.

Twelve California counties under two events. Crop-damage labels are planted
in the land-cover observations so that only the 30-day buffer window sees
them:

* days 5 and 10 after the event are almost fully clouded, and the few clear
  pixels carry label-independent noise classes (the 15-day window);
* days 20 and 25 show the damage class on affected crop pixels (enter the
  30-day window);
* days 35, 40, 50 and 55 show recovered crops on a clear sky, which out-votes
  the damage class in the 45- and 60-day windows (count ties go to the most
  recent observation).

Property labels are planted as a persistent built-to-bare change visible in
every window. Loss records, stub news responses, a social archive and a
subreddit list are generated from the same truth; audit ground truth for each
news article is kept in ``planted_truth.json``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .core import DEFAULT_EVENTS, CountyRef, EventRef, HazardType
from .gazetteer import QuerySpec, build_news_query, hazard_keywords, load_gazetteer
from .media import news_window
from .raster import CLASS_NAMES, NODATA, CountyMask, LandCoverRaster, write_lcr

C = {name: i for i, name in enumerate(CLASS_NAMES)}

MINI_COUNTIES = ("06067", "06047", "06019", "06097", "06055", "06111",
                 "06029", "06099", "06077", "06007", "06101", "06113")
MINI_EVENTS = (2, 9)
# subreddit -> expected county; the last four do not resolve
MINI_SUBREDDITS = ("sacramento", "merced", "fresno", "SantaRosa", "napa", "ventura", "bakersfield",
                   "modesto", "r/stockton", "chico", "oroville", "yubacity", "davis", "losangeles",
                   "news", "pics", "askreddit", "xyzzyqwert")

# Same damage classes for every hazard so both events train the same features.
DAMAGE_CLASSES = {"medium": C["grass"], "high": C["bare"]}
NOISE_CLASSES = (C["trees"], C["shrub_and_scrub"], C["snow_and_ice"])
PRE_DAYS = (3, 9, 17, 28, 41, 52)
NOISY_POST_DAYS = (5, 10)
SIGNAL_POST_DAYS = (20, 25)
RECOVERY_POST_DAYS = (35, 40, 50, 55)


@dataclass(frozen=True)
class MiniSpec:
    size: int = 24
    pixel_size_m: float = 10.0
    counties: tuple[str, ...] = MINI_COUNTIES
    events: tuple[int, ...] = MINI_EVENTS
    noisy_cloud: float = 0.9
    signal_cloud: float = 0.2
    pre_cloud: float = 0.3
    seed: int = 2017


def _balanced(rng, n):
    labels = np.array(["low", "medium", "high"] * (n // 3 + 1))[:n]
    return list(rng.permutation(labels))


def _amount(rng, label, bounds):
    lo, hi = bounds[label]
    return Decimal(str(round(float(rng.uniform(lo, hi)), 2)))


CROP_BOUNDS = {"low": (0, 900), "medium": (2_000, 90_000), "high": (150_000, 5_000_000)}
PROPERTY_BOUNDS = {"low": (0, 9_000), "medium": (20_000, 900_000), "high": (1_500_000, 50_000_000)}


def _base_landcover(rng, size):
    probs = {"crops": 0.4, "trees": 0.1, "grass": 0.15, "built": 0.12, "water": 0.05,
             "shrub_and_scrub": 0.1, "bare": 0.08}
    names = list(probs)
    p = np.array([probs[n] for n in names])
    blocks = rng.choice([C[n] for n in names], size=(size // 4 + 1, size // 4 + 1), p=p / p.sum())
    return np.kron(blocks, np.ones((4, 4), dtype=np.int64))[:size, :size].astype(np.uint8)


def _mask(rng, size):
    r, c = np.mgrid[0:size, 0:size]
    centre = (size - 1) / 2
    radius = rng.uniform(0.42, 0.5) * size
    return ((r - centre) ** 2 + (c - centre) ** 2 <= radius ** 2).astype(np.uint8)


def county_observations(rng, base, event: EventRef, crop_label: str, property_label: str,
                        spec: MiniSpec) -> list[tuple[dt.date, np.ndarray]]:
    """Dated class grids around one event for one county."""
    size = base.shape[0]
    crops = np.flatnonzero(base.ravel() == C["crops"])
    built = np.flatnonzero(base.ravel() == C["built"])
    damaged = np.zeros(base.size, bool)
    if crop_label != "low":
        k = int(round(rng.uniform(0.3, 0.6) * len(crops)))
        damaged[rng.choice(crops, k, replace=False)] = True
    destroyed = np.zeros(base.size, bool)
    frac = {"low": 0.0, "medium": 0.25, "high": 0.6}[property_label]
    destroyed[rng.choice(built, int(round(frac * len(built))), replace=False)] = True
    damaged, destroyed = damaged.reshape(base.shape), destroyed.reshape(base.shape)
    damage_class = DAMAGE_CLASSES[crop_label] if crop_label != "low" else C["crops"]

    def clouds(p):
        return rng.random((size, size)) < p

    obs = []
    for d in PRE_DAYS:
        a = base.copy()
        a[clouds(spec.pre_cloud)] = NODATA
        obs.append((event.start_date - dt.timedelta(days=d), a))
    for d in NOISY_POST_DAYS:
        a = rng.choice(NOISE_CLASSES, size=(size, size)).astype(np.uint8)
        a[clouds(spec.noisy_cloud)] = NODATA
        obs.append((event.end_date + dt.timedelta(days=d), a))
    for d in SIGNAL_POST_DAYS:
        a = base.copy()
        a[damaged] = damage_class
        a[destroyed] = C["bare"]
        a[clouds(spec.signal_cloud)] = NODATA
        obs.append((event.end_date + dt.timedelta(days=d), a))
    for d in RECOVERY_POST_DAYS:
        a = base.copy()
        a[destroyed] = C["bare"]
        obs.append((event.end_date + dt.timedelta(days=d), a))
    return obs


# -- text ---------------------------------------------------------------------------------------

def _money(x: float) -> str:
    if x >= 1e6:
        return f"${x / 1e6:.1f} million"
    return f"${x:,.0f}"


_HAZARD_NOUN = {HazardType.FLOOD: "flooding", HazardType.WILDFIRE: "the wildfire"}


def _news_articles(rng, county: CountyRef, event: EventRef, truth: dict, neighbour: CountyRef):
    start, end = news_window(event)
    days = (end - start).days
    noun = _HAZARD_NOUN.get(event.hazard_type, "the disaster")
    name = county.short_name

    def when():
        d = start + dt.timedelta(days=int(rng.integers(3, days)))
        return dt.datetime(d.year, d.month, d.day, int(rng.integers(6, 22)), int(rng.integers(0, 60)),
                           tzinfo=dt.timezone.utc).isoformat().replace("+00:00", "Z")

    arts = []

    def add(title, body, geo=1, rel=1):
        slug = f"{county.fips}-{event.event_id}-{len(arts)}"
        arts.append({"title": title, "body": body, "url": f"https://news.example.org/{slug}",
                     "published_at": when(), "_truth": {"geolocation_correct": geo, "relevant": rel}})

    prop = float(truth["property_damage"]) * rng.uniform(0.8, 1.2)
    crop = float(truth["crop_damage"]) * rng.uniform(0.8, 1.2)
    prop_s = (f"Officials estimate {_money(prop)} in damage to homes and businesses."
              if truth["property"] != "low" else "A few homes had minor water in basements.")
    add(f"{noun.capitalize()} hits {name}", f"{noun.capitalize()} swept through {name} County this week. {prop_s}")
    if truth["crop"] != "low":
        add(f"{name} farmers count losses",
            f"Growers in {name} County reported about {_money(crop)} in crop losses after {noun}.")
    else:
        add(f"{name} farms spared", f"Most farms in {name} County escaped {noun} with little harm to fields.")
    people = []
    if truth["injuries"]:
        people.append(f"{truth['injuries']} residents were injured during {noun}.")
    if truth["fatalities"]:
        people.append(f"Authorities said {truth['fatalities']} people died.")
    people.append("The Red Cross opened a shelter and volunteers collected donations.")
    add(f"Relief efforts continue in {name}", " ".join(people))
    add(f"Storm of criticism over {name} budget", f"A storm of criticism followed the {name} County budget vote.",
        rel=0)
    add(f"{name} county fair opens", f"The {name} County fair opens this weekend with rides and music.", rel=0)
    if rng.random() < 0.5:
        add(f"{neighbour.short_name} roads closed",
            f"{noun.capitalize()} damaged roads and a bridge in {neighbour.short_name} County.", geo=0)
    return arts


def _social_posts(rng, subreddit: str, county: CountyRef, event: EventRef, truth: dict):
    start, end = news_window(event)
    noun = _HAZARD_NOUN.get(event.hazard_type, "the disaster")

    def ts(lo, hi):
        d = start + dt.timedelta(days=int(rng.integers(lo, hi)))
        return int(dt.datetime(d.year, d.month, d.day, 12, tzinfo=dt.timezone.utc).timestamp())

    span = (end - start).days
    posts = [
        {"subreddit": subreddit, "created_utc": ts(3, span), "title": f"Anyone else dealing with {noun}?",
         "selftext": f"Our street flooded and the house has damage." if event.hazard_type == HazardType.FLOOD
         else "Ash everywhere and the fire destroyed a barn down the road.",
         "permalink": f"/r/{subreddit}/comments/{county.fips}{event.event_id}a/"},
        {"subreddit": subreddit, "created_utc": ts(3, span), "title": "Best tacos in town?",
         "selftext": "Looking for recommendations.", "permalink": f"/r/{subreddit}/comments/{county.fips}{event.event_id}b/"},
    ]
    if truth["injuries"]:
        posts.append({"subreddit": subreddit, "created_utc": ts(3, span), "title": "Neighbor hurt",
                      "selftext": f"My neighbor was injured in the {noun.replace('the ', '')} cleanup.",
                      "permalink": f"/r/{subreddit}/comments/{county.fips}{event.event_id}c/"})
    # outside the window: must be ignored
    posts.append({"subreddit": subreddit, "created_utc": ts(-60, -40), "title": "Old flood photos",
                  "selftext": "Flood pictures from years ago.",
                  "permalink": f"/r/{subreddit}/comments/{county.fips}{event.event_id}d/"})
    return posts


# -- writer -------------------------------------------------------------------------------------

CONFIG_TEMPLATE = """\
[paths]
store = store
loss_records = loss_records.csv
subreddits = subreddits.txt
archive = social_archive.ndjson
rasters = rasters
masks = masks
{audit}
[events]
ids = {events}

[news]
client = stub
stub_responses = news_stub.json

[chat]
client = heuristic

[features]
windows = 15, 30, 45, 60

[train]
models = logistic, random_forest, gbt, mlp_1, mlp_2, mlp_5
tasks = property, crop
folds = 5
seed = 0
baseline_draws = 100000

[audit]
seed = 0
sample_size = 12
"""


def write_config(out: Path, events, audit_sheet: str | None = None) -> Path:
    audit = f"audit_sheet = {audit_sheet}\n" if audit_sheet else ""
    p = out / "config.ini"
    p.write_text(CONFIG_TEMPLATE.format(audit=audit, events=", ".join(map(str, events))), encoding="utf-8")
    return p


def make_mini_dataset(out_dir: str | Path, spec: MiniSpec = MiniSpec()) -> dict:
    """Write the mini-dataset into ``out_dir`` and return its planted truth."""
    out = Path(out_dir)
    (out / "rasters").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    gaz = load_gazetteer()
    counties = [gaz.counties[f] for f in spec.counties]
    events = [DEFAULT_EVENTS[e] for e in spec.events]

    truth: dict[str, dict] = {}
    for ev in events:
        crop_labels = _balanced(rng, len(counties))
        prop_labels = _balanced(rng, len(counties))
        for county, cl, pl in zip(counties, crop_labels, prop_labels):
            truth[f"{county.fips}:{ev.event_id}"] = {
                "crop": cl, "property": pl,
                "crop_damage": _amount(rng, cl, CROP_BOUNDS),
                "property_damage": _amount(rng, pl, PROPERTY_BOUNDS),
                "injuries": int(rng.integers(1, 20)) if rng.random() < 0.5 else 0,
                "fatalities": int(rng.integers(1, 4)) if rng.random() < 0.25 else 0,
            }

    # rasters and masks
    for i, county in enumerate(counties):
        base = _base_landcover(rng, spec.size)
        geom = dict(pixel_size_m=spec.pixel_size_m, origin=(500_000.0 + 1000 * i, 4_200_000.0), crs=32610)
        write_lcr(out / "masks" / f"{county.fips}.lcr", CountyMask(_mask(rng, spec.size), **geom))
        cdir = out / "rasters" / county.fips
        cdir.mkdir(exist_ok=True)
        for ev in events:
            t = truth[f"{county.fips}:{ev.event_id}"]
            for date, cells in county_observations(rng, base, ev, t["crop"], t["property"], spec):
                write_lcr(cdir / f"{date.isoformat()}.lcr", LandCoverRaster(cells, date, **geom))

    # loss records; large losses are split over two rows to exercise aggregation
    rows = ["fips,event_id,property_damage,crop_damage,injuries,fatalities"]
    for key in sorted(truth):
        fips, eid = key.split(":")
        t = truth[key]
        if t["property"] == "high":
            half = (t["property_damage"] / 2).quantize(Decimal("0.01"))
            rows.append(f"{fips},{eid},{half},0,0,0")
            rows.append(f"{fips},{eid},{t['property_damage'] - half},{t['crop_damage']},{t['injuries']},"
                        f"{t['fatalities']}")
        else:
            rows.append(f"{fips},{eid},{t['property_damage']},{t['crop_damage']},{t['injuries']},{t['fatalities']}")
    (out / "loss_records.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    # news stub responses keyed by the exact query the pipeline will build
    stub, planted = {}, {}
    for ev in events:
        kws = tuple(hazard_keywords(ev.hazard_type))
        for j, county in enumerate(counties):
            neighbour = counties[(j + 1) % len(counties)]
            arts = _news_articles(rng, county, ev, truth[f"{county.fips}:{ev.event_id}"], neighbour)
            for a in arts:
                planted[a["url"]] = a.pop("_truth")
            query = build_news_query(QuerySpec(kws, county.short_name, news_window(ev)))
            stub[query] = sorted(arts, key=lambda a: a["published_at"])
    (out / "news_stub.json").write_text(json.dumps(stub, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "planted_truth.json").write_text(json.dumps(planted, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    # social archive and subreddit list
    lines = []
    for sub in MINI_SUBREDDITS:
        m = gaz.lookup(sub.lower().removeprefix("r/"))
        if m.county is None or m.county.fips not in spec.counties:
            continue
        for ev in events:
            for post in _social_posts(rng, sub.lower().removeprefix("r/"), m.county, ev,
                                      truth[f"{m.county.fips}:{ev.event_id}"]):
                lines.append(json.dumps(post, sort_keys=True))
    lines.insert(len(lines) // 2, "{not json")
    lines.append(json.dumps({"subreddit": "napa", "title": "missing timestamp"}))
    (out / "social_archive.ndjson").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "subreddits.txt").write_text("\n".join(MINI_SUBREDDITS) + "\n", encoding="utf-8")

    write_config(out, spec.events)
    serial = {k: {**v, "crop_damage": str(v["crop_damage"]), "property_damage": str(v["property_damage"])}
              for k, v in truth.items()}
    (out / "labels_truth.json").write_text(json.dumps(serial, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return serial


def fill_audit_sheet(sheet: str | Path, planted_truth: str | Path, out: str | Path) -> Path:
    """Copy an audit sheet with verdicts taken from the planted truth (simulated annotator)."""
    planted = json.loads(Path(planted_truth).read_text(encoding="utf-8"))
    with open(sheet, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames
        rows = list(reader)
    for r in rows:
        t = planted[r["url"]]
        r["geolocation_correct"] = str(t["geolocation_correct"])
        r["relevant"] = str(t["relevant"])
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return Path(out)
