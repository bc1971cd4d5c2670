"""Domain types, offline loss-record ingestion and severity bucketing.

Dollar amounts are held as :class:`decimal.Decimal` rounded to whole cents so
that threshold comparisons never suffer from binary float drift.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Mapping

CENT = Decimal("0.01")

# Bucket edges. Low = [0, low_max), Medium = [low_max, high_min], High = (high_min, inf)
PROPERTY_MEDIUM_MIN = Decimal("10000")
PROPERTY_HIGH_ABOVE = Decimal("1000000")
CROP_MEDIUM_MIN = Decimal("1000")
CROP_HIGH_ABOVE = Decimal("100000")

LOSS_COLUMNS = ("fips", "event_id", "property_damage", "crop_damage", "injuries", "fatalities")
GROUND_TRUTH_COLUMNS = ("fips", "event_id", "property", "crop", "injuries", "fatalities")

_FIPS_RE = re.compile(r"^\d{5}$")


class DataError(ValueError):
    """Input file content that cannot be turned into domain records."""

    def __init__(self, message: str, *, path: str | None = None, row: int | None = None,
                 column: str | None = None):
        self.path = path
        self.row = row
        self.column = column
        where = [str(path)] if path is not None else []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class HazardType(str, enum.Enum):
    FLOOD = "flood"
    HURRICANE = "hurricane"
    SEVERE_WEATHER = "severe_weather"
    TORNADO = "tornado"
    WILDFIRE = "wildfire"


class Severity3(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "Severity3":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValueError(f"not a severity token: {token!r}") from None


class PresenceLabel(enum.IntEnum):
    NO = 0
    YES = 1

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "PresenceLabel":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValueError(f"not a presence token: {token!r}") from None


# task name -> label enum; order matters for reports
TASKS: dict[str, type[enum.IntEnum]] = {
    "property": Severity3,
    "crop": Severity3,
    "injuries": PresenceLabel,
    "fatalities": PresenceLabel,
}


def task_tokens(task: str) -> list[str]:
    return [member.token for member in TASKS[task]]


@dataclass(frozen=True, order=True)
class CountyRef:
    fips: str
    name: str
    state: str

    def __post_init__(self):
        if not _FIPS_RE.match(self.fips):
            raise ValueError(f"FIPS must be 5 digits, got {self.fips!r}")
        if not self.name or not self.state:
            raise ValueError("county name and state must be nonempty")

    @property
    def short_name(self) -> str:
        """County name without the trailing 'County'/'Parish' designation."""
        return re.sub(r"\s+(County|Parish|Borough|Municipio|city)$", "", self.name)


@dataclass(frozen=True)
class EventRef:
    event_id: int
    hazard_type: HazardType
    name: str
    start_date: dt.date
    end_date: dt.date
    summary: str = ""

    def __post_init__(self):
        if self.start_date > self.end_date:
            raise ValueError(f"event {self.event_id}: start_date after end_date")


@dataclass(frozen=True)
class CountyEvent:
    county: CountyRef
    event: EventRef

    @property
    def key(self) -> tuple[str, int]:
        return (self.county.fips, self.event.event_id)

    def __lt__(self, other):  # EventRef is not orderable; order by join key
        return self.key < other.key

    def __str__(self):
        return f"{self.county.fips}:{self.event.event_id}"


def _d(value) -> Decimal:
    return Decimal(value).quantize(CENT, rounding=ROUND_HALF_EVEN)


@dataclass(frozen=True)
class LossRecord:
    county_event: CountyEvent
    property_damage_usd: Decimal
    crop_damage_usd: Decimal
    injuries: int
    fatalities: int

    def __post_init__(self):
        object.__setattr__(self, "property_damage_usd", _d(self.property_damage_usd))
        object.__setattr__(self, "crop_damage_usd", _d(self.crop_damage_usd))
        for name in ("property_damage_usd", "crop_damage_usd", "injuries", "fatalities"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class GroundTruthLabels:
    county_event: CountyEvent
    property: Severity3
    crop: Severity3
    injuries: PresenceLabel
    fatalities: PresenceLabel

    def label(self, task: str):
        return getattr(self, task)


# The nine 2017 billion-dollar events. Dates are approximate and overridable
# through an events CSV; only names and hazard types are fixed.
DEFAULT_EVENTS: dict[int, EventRef] = {
    e.event_id: e
    for e in [
        EventRef(1, HazardType.FLOOD, "Flooding 2017 Midwest-Central",
                 dt.date(2017, 4, 25), dt.date(2017, 5, 7),
                 "Heavy rain caused river flooding across Missouri, Arkansas and the central Midwest."),
        EventRef(2, HazardType.FLOOD, "Flooding 2017 California",
                 dt.date(2017, 2, 6), dt.date(2017, 2, 22),
                 "Atmospheric river storms caused widespread flooding and levee failures in California."),
        EventRef(3, HazardType.HURRICANE, "Hurricane 2017 Harvey",
                 dt.date(2017, 8, 25), dt.date(2017, 9, 1),
                 "Hurricane Harvey made landfall in Texas and produced catastrophic flooding around Houston."),
        EventRef(4, HazardType.HURRICANE, "Hurricane 2017 Irma",
                 dt.date(2017, 9, 6), dt.date(2017, 9, 12),
                 "Hurricane Irma struck the Florida Keys and moved north through Florida and Georgia."),
        EventRef(5, HazardType.HURRICANE, "Hurricane 2017 Maria",
                 dt.date(2017, 9, 19), dt.date(2017, 9, 21),
                 "Hurricane Maria devastated Puerto Rico and the U.S. Virgin Islands."),
        EventRef(6, HazardType.SEVERE_WEATHER, "Severe Weather 2017 CO-OK-TX-NM-MO",
                 dt.date(2017, 5, 8), dt.date(2017, 5, 10),
                 "Severe storms with large hail hit Colorado, Oklahoma, Texas, New Mexico and Missouri."),
        EventRef(7, HazardType.SEVERE_WEATHER, "Severe Weather 2017 South-Southeast",
                 dt.date(2017, 4, 2), dt.date(2017, 4, 6),
                 "Severe thunderstorms and damaging winds affected the southern and southeastern states."),
        EventRef(8, HazardType.TORNADO, "Tornadoes 2017 South-Southeast",
                 dt.date(2017, 1, 21), dt.date(2017, 1, 23),
                 "A tornado outbreak struck Georgia, Mississippi and neighboring southern states."),
        EventRef(9, HazardType.WILDFIRE, "Wildfires 2017 CA",
                 dt.date(2017, 10, 8), dt.date(2017, 10, 31),
                 "Wind-driven wildfires burned across northern and southern California."),
    ]
}


def load_events(path: str | Path) -> dict[int, EventRef]:
    """Read an events CSV ``event_id,hazard_type,name,start_date,end_date[,summary]``."""
    events = {}
    with open(path, newline="", encoding="utf-8") as f:
        for i, row in enumerate(csv.DictReader(f), start=2):
            try:
                ev = EventRef(
                    event_id=int(row["event_id"]),
                    hazard_type=HazardType(row["hazard_type"].strip()),
                    name=row["name"].strip(),
                    start_date=dt.date.fromisoformat(row["start_date"].strip()),
                    end_date=dt.date.fromisoformat(row["end_date"].strip()),
                    summary=(row.get("summary") or "").strip(),
                )
            except (KeyError, ValueError) as exc:
                raise DataError(str(exc), path=str(path), row=i) from exc
            events[ev.event_id] = ev
    return events


def save_events(events: Iterable[EventRef], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["event_id", "hazard_type", "name", "start_date", "end_date", "summary"])
        for e in sorted(events, key=lambda e: e.event_id):
            w.writerow([e.event_id, e.hazard_type.value, e.name, e.start_date.isoformat(),
                        e.end_date.isoformat(), e.summary])


# -- bucketing ---------------------------------------------------------------

def _three_way(usd, medium_min: Decimal, high_above: Decimal) -> Severity3:
    value = Decimal(str(usd)) if isinstance(usd, float) else Decimal(usd)
    if value < 0:
        raise ValueError(f"dollar loss must be nonnegative, got {usd}")
    if value < medium_min:
        return Severity3.LOW
    if value <= high_above:
        return Severity3.MEDIUM
    return Severity3.HIGH


def bucket_property(usd) -> Severity3:
    return _three_way(usd, PROPERTY_MEDIUM_MIN, PROPERTY_HIGH_ABOVE)


def bucket_crop(usd) -> Severity3:
    return _three_way(usd, CROP_MEDIUM_MIN, CROP_HIGH_ABOVE)


def bucket_presence(count: int) -> PresenceLabel:
    if count < 0:
        raise ValueError(f"count must be nonnegative, got {count}")
    return PresenceLabel.YES if count > 0 else PresenceLabel.NO


def ground_truth(record: LossRecord) -> GroundTruthLabels:
    return GroundTruthLabels(
        county_event=record.county_event,
        property=bucket_property(record.property_damage_usd),
        crop=bucket_crop(record.crop_damage_usd),
        injuries=bucket_presence(record.injuries),
        fatalities=bucket_presence(record.fatalities),
    )


# -- loss-record files -------------------------------------------------------

def _parse_money(raw: str, path, row, column) -> Decimal:
    try:
        value = Decimal(raw.strip())
    except InvalidOperation:
        raise DataError(f"unparseable number {raw!r}", path=path, row=row, column=column) from None
    if not value.is_finite() or value < 0:
        raise DataError(f"expected nonnegative amount, got {raw!r}", path=path, row=row, column=column)
    return value


def _parse_count(raw: str, path, row, column) -> int:
    text = raw.strip()
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise DataError(f"unparseable number {raw!r}", path=path, row=row, column=column) from None
    if not value.is_finite() or value != value.to_integral_value() or value < 0:
        raise DataError(f"expected nonnegative integer, got {raw!r}", path=path, row=row, column=column)
    return int(value)


def load_loss_records(path: str | Path, counties: Mapping[str, CountyRef],
                      events: Mapping[int, EventRef] = DEFAULT_EVENTS) -> list[LossRecord]:
    """Read a loss CSV and aggregate rows per county-event.

    Rows sharing ``(fips, event_id)`` are summed metric by metric. The result
    is sorted by join key.
    """
    path = str(path)
    totals: dict[tuple[str, int], list] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for col in LOSS_COLUMNS:
            if col not in header:
                raise DataError("missing column", path=path, row=1, column=col)
        for i, row in enumerate(reader, start=2):
            fips = (row["fips"] or "").strip()
            if fips.isdigit() and len(fips) < 5:
                fips = fips.zfill(5)
            if fips not in counties:
                raise DataError(f"unknown FIPS {fips!r}", path=path, row=i, column="fips")
            try:
                event_id = int(row["event_id"])
            except (TypeError, ValueError):
                raise DataError(f"bad event id {row['event_id']!r}", path=path, row=i,
                                column="event_id") from None
            if event_id not in events:
                raise DataError(f"unknown event id {event_id}", path=path, row=i, column="event_id")
            metrics = [
                _parse_money(row["property_damage"] or "", path, i, "property_damage"),
                _parse_money(row["crop_damage"] or "", path, i, "crop_damage"),
                _parse_count(row["injuries"] or "", path, i, "injuries"),
                _parse_count(row["fatalities"] or "", path, i, "fatalities"),
            ]
            acc = totals.setdefault((fips, event_id), [Decimal(0), Decimal(0), 0, 0])
            for j, v in enumerate(metrics):
                acc[j] += v
    return [
        LossRecord(CountyEvent(counties[fips], events[eid]), *acc)
        for (fips, eid), acc in sorted(totals.items())
    ]


def _fmt_money(value: Decimal) -> str:
    return f"{value:.2f}"


def save_loss_records(records: Iterable[LossRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for r in sorted(records, key=lambda r: r.county_event.key):
            fips, eid = r.county_event.key
            w.writerow([fips, eid, _fmt_money(r.property_damage_usd), _fmt_money(r.crop_damage_usd),
                        r.injuries, r.fatalities])


def save_ground_truth(labels: Iterable[GroundTruthLabels], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(GROUND_TRUTH_COLUMNS)
        for g in sorted(labels, key=lambda g: g.county_event.key):
            fips, eid = g.county_event.key
            w.writerow([fips, eid, g.property.token, g.crop.token, g.injuries.token, g.fatalities.token])


def load_ground_truth(path: str | Path) -> dict[tuple[str, int], dict[str, str]]:
    """Ground-truth CSV as ``{(fips, event_id): {task: token}}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as f:
        for i, row in enumerate(csv.DictReader(f), start=2):
            key = (row["fips"].strip(), int(row["event_id"]))
            labels = {}
            for task in TASKS:
                token = row[task].strip().lower()
                if token not in task_tokens(task):
                    raise DataError(f"bad label {token!r}", path=str(path), row=i, column=task)
                labels[task] = token
            out[key] = labels
    return out
