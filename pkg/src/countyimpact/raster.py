"""Land-cover compositing and the 9x9 transition-area features.

Rasters are class-coded grids in the Dynamic World taxonomy with ``NODATA``
(255) for cloud or sensor gaps. Features for one county-event are the areas
(m^2) moving from each pre-event class to each post-event class inside the
county mask, flattened source-major into 81 values.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NODATA = 255
CLASS_NAMES = ("water", "trees", "grass", "flooded_vegetation", "crops",
               "shrub_and_scrub", "built", "bare", "snow_and_ice")
N_CLASSES = len(CLASS_NAMES)
FEATURE_ORDER_VERSION = "1"
FEATURE_NAMES = tuple(f"f_{s}_{d}" for s in CLASS_NAMES for d in CLASS_NAMES)
BUFFER_WINDOWS = (15, 30, 45, 60)

EPOCH = dt.date(1970, 1, 1)
_HEADER = struct.Struct("<4sIIdddIqB")
MAGIC = b"LCR1"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class GridGeometry:
    width: int
    height: int
    pixel_size_m: float
    origin: tuple[float, float]
    crs: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LandCoverRaster:
    cells: np.ndarray  # (height, width) uint8
    observed_at: dt.date
    pixel_size_m: float = 10.0
    origin: tuple[float, float] = (0.0, 0.0)
    crs: int = 0

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2-D grid")
        cells = cells.astype(np.uint8, copy=True)
        bad = (cells >= N_CLASSES) & (cells != NODATA)
        if bad.any():
            raise ValueError(f"invalid class codes: {sorted(set(cells[bad].tolist()))}")
        object.__setattr__(self, "cells", _readonly(cells))

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.width, self.height, float(self.pixel_size_m),
                            (float(self.origin[0]), float(self.origin[1])), int(self.crs))

    def __eq__(self, other):
        if not isinstance(other, LandCoverRaster):
            return NotImplemented
        return (self.geometry == other.geometry and self.observed_at == other.observed_at
                and np.array_equal(self.cells, other.cells))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CountyMask:
    inside: np.ndarray  # (height, width) bool
    pixel_size_m: float = 10.0
    origin: tuple[float, float] = (0.0, 0.0)
    crs: int = 0

    def __post_init__(self):
        inside = np.asarray(self.inside)
        if inside.ndim != 2:
            raise ValueError("mask must be a 2-D grid")
        object.__setattr__(self, "inside", _readonly(inside.astype(bool)))

    @property
    def geometry(self) -> GridGeometry:
        h, w = self.inside.shape
        return GridGeometry(w, h, float(self.pixel_size_m),
                            (float(self.origin[0]), float(self.origin[1])), int(self.crs))

    @classmethod
    def full(cls, like: LandCoverRaster) -> "CountyMask":
        return cls(np.ones(like.cells.shape, bool), like.pixel_size_m, like.origin, like.crs)


def _check_same(reference: GridGeometry, others: Iterable[tuple[str, GridGeometry]]) -> None:
    for label, g in others:
        if g != reference:
            raise GeometryError(f"{label} geometry {g} does not match {reference}")


# -- compositing ----------------------------------------------------------------

class Direction(str, enum.Enum):
    BEFORE = "before"
    AFTER = "after"


class CompositeRule(str, enum.Enum):
    MODE_LATEST_TIEBREAK = "mode_latest_tiebreak"
    LATEST_VALID = "latest_valid"


@dataclass(frozen=True)
class CompositeSpec:
    anchor_date: dt.date
    direction: Direction
    buffer_days: int
    rule: CompositeRule = CompositeRule.MODE_LATEST_TIEBREAK

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "rule", CompositeRule(self.rule))
        if self.buffer_days <= 0:
            raise ValueError("buffer_days must be positive")

    @property
    def window(self) -> tuple[dt.date, dt.date]:
        """Inclusive date range of ``buffer_days`` days ending or starting at the anchor."""
        span = dt.timedelta(days=self.buffer_days - 1)
        if self.direction is Direction.BEFORE:
            return self.anchor_date - span, self.anchor_date
        return self.anchor_date, self.anchor_date + span

    def contains(self, day: dt.date) -> bool:
        lo, hi = self.window
        return lo <= day <= hi


def select_window(rasters: Iterable[LandCoverRaster], spec: CompositeSpec) -> list[LandCoverRaster]:
    return [r for r in rasters if spec.contains(r.observed_at)]


def composite(rasters: Sequence[LandCoverRaster], spec: CompositeSpec) -> LandCoverRaster:
    """Per-pixel composite of the observations in one window.

    The mode rule takes the most frequent valid class and breaks count ties by
    the most recent observation date, so input order does not matter when
    dates are distinct.
    """
    if not rasters:
        raise ValueError("composite needs at least one raster")
    ref = rasters[0].geometry
    _check_same(ref, ((f"raster {i} ({r.observed_at})", r.geometry) for i, r in enumerate(rasters)))
    for i, r in enumerate(rasters):
        if not spec.contains(r.observed_at):
            raise ValueError(f"raster {i} observed {r.observed_at} outside window {spec.window}")

    ordered = sorted(rasters, key=lambda r: r.observed_at)
    stack = np.stack([r.cells.ravel() for r in ordered])  # (k, n), oldest first
    k = stack.shape[0]

    if spec.rule is CompositeRule.LATEST_VALID:
        valid = stack != NODATA
        # index of the last valid observation per pixel
        last = k - 1 - np.argmax(valid[::-1], axis=0)
        out = stack[last, np.arange(stack.shape[1])]
        out[~valid.any(axis=0)] = NODATA
    else:
        step = np.arange(1, k + 1)[:, None]
        scores = np.empty((N_CLASSES, stack.shape[1]), dtype=np.int64)
        for c in range(N_CLASSES):
            hit = stack == c
            count = hit.sum(axis=0)
            latest = (hit * step).max(axis=0)  # 1-based position of last hit, 0 if none
            scores[c] = count * (k + 1) + latest
        out = scores.argmax(axis=0).astype(np.uint8)
        out[scores.max(axis=0) == 0] = NODATA

    window_end = spec.window[1]
    first = rasters[0]
    return LandCoverRaster(out.reshape(first.cells.shape), window_end, first.pixel_size_m,
                           first.origin, first.crs)


# -- transitions -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    counts: np.ndarray  # (9, 9) int64 pixel counts, (source, target)
    pixel_size_m: float
    excluded_pixels: int = 0  # in-mask pixels NODATA in either composite

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or (counts < 0).any():
            raise ValueError("counts must be a nonnegative 9x9 array")
        object.__setattr__(self, "counts", _readonly(counts))

    @property
    def pixel_area_m2(self) -> float:
        return float(self.pixel_size_m) ** 2

    @property
    def areas_m2(self) -> np.ndarray:
        return self.counts * self.pixel_area_m2

    @property
    def covalid_pixels(self) -> int:
        return int(self.counts.sum())

    def conserved(self) -> bool:
        return float(self.areas_m2.sum()) == self.covalid_pixels * self.pixel_area_m2

    def area(self, source: str, target: str) -> float:
        return float(self.areas_m2[CLASS_NAMES.index(source), CLASS_NAMES.index(target)])


def _geometry_check(pre: LandCoverRaster, post: LandCoverRaster, mask: CountyMask) -> None:
    _check_same(pre.geometry, [("post composite", post.geometry), ("county mask", mask.geometry)])


def transition_matrix(pre: LandCoverRaster, post: LandCoverRaster, mask: CountyMask) -> TransitionMatrix:
    _geometry_check(pre, post, mask)
    a, b, m = pre.cells.ravel(), post.cells.ravel(), mask.inside.ravel()
    valid = m & (a != NODATA) & (b != NODATA)
    idx = a[valid].astype(np.int64) * N_CLASSES + b[valid]
    counts = np.bincount(idx, minlength=N_CLASSES * N_CLASSES).reshape(N_CLASSES, N_CLASSES)
    tm = TransitionMatrix(counts, pre.pixel_size_m, int(m.sum() - valid.sum()))
    assert tm.conserved()
    return tm


def coverage_fraction(pre: LandCoverRaster, post: LandCoverRaster, mask: CountyMask) -> float:
    _geometry_check(pre, post, mask)
    inside = mask.inside
    total = int(inside.sum())
    if total == 0:
        raise ValueError("county mask is empty")
    covalid = int((inside & (pre.cells != NODATA) & (post.cells != NODATA)).sum())
    return covalid / total


def flatten_features(matrix: TransitionMatrix) -> np.ndarray:
    """81 areas in source-major order, matching ``FEATURE_NAMES``."""
    return matrix.areas_m2.reshape(-1).astype(np.float64)


def unflatten_features(vector: Sequence[float]) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (N_CLASSES * N_CLASSES,):
        raise ValueError("feature vector must have 81 entries")
    return v.reshape(N_CLASSES, N_CLASSES)


# -- LCR1 container ------------------------------------------------------------------

def write_lcr(path: str | Path, raster: LandCoverRaster | CountyMask,
              observed_at: dt.date | None = None) -> None:
    if isinstance(raster, CountyMask):
        cells = raster.inside.astype(np.uint8)
        day = observed_at or EPOCH
    else:
        cells = raster.cells
        day = raster.observed_at
    g = raster.geometry
    header = _HEADER.pack(MAGIC, g.width, g.height, g.pixel_size_m, g.origin[0], g.origin[1], g.crs,
                          (day - EPOCH).days, NODATA)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(cells, dtype=np.uint8).tobytes())


def _read_container(path: str | Path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ValueError(f"{path}: not an LCR1 file")
    magic, w, h, px, ox, oy, crs, day, nodata = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != w * h:
        raise ValueError(f"{path}: expected {w * h} cells, found {len(body)}")
    cells = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    if nodata != NODATA:
        cells = np.where(cells == nodata, NODATA, cells).astype(np.uint8)
    return cells, px, (ox, oy), crs, EPOCH + dt.timedelta(days=day)


def read_lcr(path: str | Path) -> LandCoverRaster:
    cells, px, origin, crs, day = _read_container(path)
    return LandCoverRaster(cells, day, px, origin, crs)


def read_mask(path: str | Path) -> CountyMask:
    cells, px, origin, crs, _ = _read_container(path)
    if not np.isin(cells, (0, 1)).all():
        raise ValueError(f"{path}: mask cells must be 0 or 1")
    return CountyMask(cells == 1, px, origin, crs)


# -- county features ---------------------------------------------------------------

class MissingRasters(LookupError):
    pass


@dataclass(frozen=True)
class FeatureRow:
    fips: str
    event_id: int
    buffer_days: int
    coverage: float
    values: np.ndarray  # 81 areas


def window_specs(start: dt.date, end: dt.date, buffer_days: int, pre_offset_days: int = 1,
                 post_offset_days: int = 1,
                 rule: CompositeRule = CompositeRule.MODE_LATEST_TIEBREAK) -> tuple[CompositeSpec, CompositeSpec]:
    pre = CompositeSpec(start - dt.timedelta(days=pre_offset_days), Direction.BEFORE, buffer_days, rule)
    post = CompositeSpec(end + dt.timedelta(days=post_offset_days), Direction.AFTER, buffer_days, rule)
    return pre, post


def county_features(observations: Sequence[LandCoverRaster], mask: CountyMask, fips: str, event_id: int,
                    start: dt.date, end: dt.date, buffer_days: int, pre_offset_days: int = 1,
                    post_offset_days: int = 1) -> FeatureRow:
    pre_spec, post_spec = window_specs(start, end, buffer_days, pre_offset_days, post_offset_days)
    pre_obs, post_obs = select_window(observations, pre_spec), select_window(observations, post_spec)
    if not pre_obs or not post_obs:
        side = "pre" if not pre_obs else "post"
        raise MissingRasters(f"{fips}: no {side}-event rasters in {buffer_days}-day window")
    pre, post = composite(pre_obs, pre_spec), composite(post_obs, post_spec)
    tm = transition_matrix(pre, post, mask)
    return FeatureRow(fips, event_id, buffer_days, coverage_fraction(pre, post, mask), flatten_features(tm))


def load_county_rasters(raster_dir: str | Path, fips: str) -> list[LandCoverRaster]:
    folder = Path(raster_dir) / fips
    if not folder.is_dir():
        return []
    return [read_lcr(p) for p in sorted(folder.glob("*.lcr"))]


@dataclass
class FeatureRun:
    rows: dict[int, list[FeatureRow]]
    skipped: list[tuple[str, int, int, str]]  # fips, event_id, window, reason


def compute_features(pairs: Sequence[tuple[str, int, dt.date, dt.date]], raster_dir: str | Path,
                     mask_dir: str | Path, windows: Sequence[int] = BUFFER_WINDOWS,
                     pre_offset_days: int = 1, post_offset_days: int = 1, workers: int = 1) -> FeatureRun:
    """Features for every (fips, event_id, start, end) pair and window.

    Counties are independent; with ``workers > 1`` they run on a thread pool.
    Output order is always the sorted pair order.
    """
    pairs = sorted(pairs)

    def one(pair):
        fips, event_id, start, end = pair
        rows, skipped = [], []
        mask_path = Path(mask_dir) / f"{fips}.lcr"
        if not mask_path.exists():
            return rows, [(fips, event_id, w, "missing county mask") for w in windows]
        mask = read_mask(mask_path)
        obs = load_county_rasters(raster_dir, fips)
        for w in windows:
            try:
                rows.append(county_features(obs, mask, fips, event_id, start, end, w,
                                            pre_offset_days, post_offset_days))
            except MissingRasters as exc:
                skipped.append((fips, event_id, w, str(exc)))
        return rows, skipped

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    run = FeatureRun({w: [] for w in windows}, [])
    for rows, skipped in results:
        for r in rows:
            run.rows[r.buffer_days].append(r)
        run.skipped.extend(skipped)
    return run


FEATURE_CSV_META = ("fips", "event_id", "buffer_days", "coverage_fraction")


def write_feature_csv(rows: Sequence[FeatureRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(FEATURE_CSV_META + FEATURE_NAMES)
        for r in sorted(rows, key=lambda r: (r.fips, r.event_id)):
            w.writerow([r.fips, r.event_id, r.buffer_days, repr(float(r.coverage))]
                       + [repr(float(v)) for v in r.values])


def read_feature_csv(path: str | Path) -> list[FeatureRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in FEATURE_CSV_META + FEATURE_NAMES if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing feature columns, e.g. {missing[0]}")
        for row in reader:
            rows.append(FeatureRow(row["fips"], int(row["event_id"]), int(row["buffer_days"]),
                                   float(row["coverage_fraction"]),
                                   np.array([float(row[n]) for n in FEATURE_NAMES])))
    return rows
