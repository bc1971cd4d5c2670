import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from countyimpact.raster import (
    BUFFER_WINDOWS, CLASS_NAMES, FEATURE_NAMES, NODATA, CompositeRule, CompositeSpec, CountyMask,
    GeometryError, LandCoverRaster, MissingRasters, composite, compute_features, county_features,
    coverage_fraction, flatten_features, read_feature_csv, read_lcr, read_mask, transition_matrix,
    unflatten_features, window_specs, write_feature_csv, write_lcr,
)

from oracles import naive_composite_pixel, naive_tally

BUILT = CLASS_NAMES.index("built")
TREES, WATER = CLASS_NAMES.index("trees"), CLASS_NAMES.index("water")
ANCHOR = dt.date(2017, 10, 31)
SPEC = CompositeSpec(ANCHOR, "after", 30)


def r(cells, day=0, **kw):
    return LandCoverRaster(np.asarray(cells, dtype=np.uint8), ANCHOR + dt.timedelta(days=day), **kw)


def test_feature_names_contract():
    assert len(CLASS_NAMES) == 9 and len(FEATURE_NAMES) == 81
    assert FEATURE_NAMES[60] == "f_built_built"
    assert FEATURE_NAMES[0] == "f_water_water" and FEATURE_NAMES[1] == "f_water_trees"


def test_identity_fixture():
    a = r(np.full((100, 100), BUILT))
    tm = transition_matrix(a, a, CountyMask.full(a))
    v = flatten_features(tm)
    assert v.shape == (81,) and v[60] == 1_000_000.0
    assert np.count_nonzero(v) == 1
    assert 6 * 9 + 6 == 60


def test_single_pixel_change():
    pre = np.full((20, 20), WATER)
    pre[3, 4] = TREES
    post = np.full((20, 20), WATER)
    tm = transition_matrix(r(pre), r(post), CountyMask.full(r(pre)))
    assert tm.area("trees", "water") == 100.0
    assert tm.area("water", "water") == 399 * 100.0


def test_zero_matrix_and_bijection():
    a = r(np.full((4, 4), NODATA))
    tm = transition_matrix(a, a, CountyMask.full(a))
    assert not flatten_features(tm).any()
    rng = np.random.default_rng(0)
    m = rng.integers(0, 1000, size=(9, 9)).astype(float)
    assert np.array_equal(unflatten_features(m.ravel()), m)
    with pytest.raises(ValueError):
        unflatten_features(np.zeros(80))


def test_random_20x20_vs_bruteforce():
    rng = np.random.default_rng(20)
    for _ in range(20):
        pre = rng.choice([*range(9), NODATA], size=(20, 20))
        post = rng.choice([*range(9), NODATA], size=(20, 20))
        mask = rng.random((20, 20)) < 0.7
        a, b = r(pre), r(post)
        tm = transition_matrix(a, b, CountyMask(mask))
        assert np.array_equal(tm.counts, naive_tally(pre, post, mask))
        assert tm.excluded_pixels == mask.sum() - tm.covalid_pixels


grids = st.tuples(st.integers(1, 32), st.integers(1, 32)).flatmap(lambda hw: st.tuples(
    arrays(np.uint8, hw, elements=st.sampled_from([*range(9), NODATA])),
    arrays(np.uint8, hw, elements=st.sampled_from([*range(9), NODATA])),
    arrays(np.bool_, hw),
    st.sampled_from([10.0, 30.0, 0.5]),
))


@given(grids)
def test_matrix_matches_oracle_and_conserves(g):
    pre, post, mask, px = g
    tm = transition_matrix(r(pre, pixel_size_m=px), r(post, pixel_size_m=px), CountyMask(mask, px))
    assert np.array_equal(tm.counts, naive_tally(pre, post, mask))
    assert tm.areas_m2.sum() == tm.covalid_pixels * px * px
    assert (tm.areas_m2 >= 0).all()


@given(grids)
def test_self_transition_is_diagonal(g):
    pre, _, mask, _ = g
    a = r(pre)
    tm = transition_matrix(a, a, CountyMask(mask))
    assert not (tm.counts - np.diag(np.diag(tm.counts))).any()


def test_geometry_mismatch():
    a = r(np.zeros((4, 4)))
    with pytest.raises(GeometryError, match="county mask"):
        transition_matrix(a, a, CountyMask(np.ones((4, 5), bool)))
    with pytest.raises(GeometryError, match="post"):
        transition_matrix(a, r(np.zeros((4, 4)), pixel_size_m=30.0), CountyMask.full(a))
    with pytest.raises(GeometryError, match="raster 1"):
        composite([a, r(np.zeros((4, 4)), day=1, origin=(5.0, 0.0))], SPEC)


def test_raster_invariants():
    with pytest.raises(ValueError):
        r([[9]])
    with pytest.raises(ValueError):
        CompositeSpec(ANCHOR, "after", 0)


def test_coverage_examples():
    a = r(np.zeros((10, 10)))
    assert coverage_fraction(a, a, CountyMask.full(a)) == 1.0
    pre = np.zeros((10, 10))
    pre[:5] = NODATA
    assert coverage_fraction(r(pre), a, CountyMask.full(a)) == 0.5
    scattered = np.zeros((10, 10))
    scattered[[0, 3, 7], [1, 2, 9]] = NODATA
    mask = np.zeros((10, 10), bool)
    mask[:4] = True  # 40 pixels, 2 NODATA inside
    assert coverage_fraction(r(scattered), a, CountyMask(mask)) == 38 / 40
    with pytest.raises(ValueError):
        coverage_fraction(a, a, CountyMask(np.zeros((10, 10), bool)))


def test_composite_examples():
    x = r([[WATER, TREES], [NODATA, BUILT]])
    assert composite([x], SPEC) == r(x.cells, day=29)
    series = [r([[WATER]], 0), r([[WATER]], 1), r([[TREES]], 2)]
    assert composite(series, SPEC).cells[0, 0] == WATER
    assert composite([r([[TREES]], 1), r([[WATER]], 5)], SPEC).cells[0, 0] == WATER
    assert composite([r([[NODATA]], 1), r([[NODATA]], 5)], SPEC).cells[0, 0] == NODATA
    assert composite([r([[NODATA]], 1), r([[TREES]], 2), r([[NODATA]], 5)], SPEC).cells[0, 0] == TREES
    assert composite([x], SPEC).observed_at == SPEC.window[1]


def test_composite_errors():
    with pytest.raises(ValueError):
        composite([], SPEC)
    with pytest.raises(ValueError, match="outside window"):
        composite([r([[0]], 30)], SPEC)


def test_latest_valid_rule():
    spec = CompositeSpec(ANCHOR, "after", 30, CompositeRule.LATEST_VALID)
    out = composite([r([[WATER, 1]], 0), r([[WATER, 2]], 1), r([[TREES, NODATA]], 2)], spec)
    assert out.cells.tolist() == [[TREES, 2]]


def test_window_specs_offsets():
    start, end = dt.date(2017, 10, 8), dt.date(2017, 10, 31)
    pre, post = window_specs(start, end, 30)
    assert pre.window == (dt.date(2017, 9, 8), dt.date(2017, 10, 7))
    assert post.window == (dt.date(2017, 11, 1), dt.date(2017, 11, 30))


series_st = st.integers(1, 8).flatmap(lambda k: st.tuples(
    st.permutations(range(30)).map(lambda p: sorted(p[:k])),
    arrays(np.uint8, (k, 3, 3), elements=st.sampled_from([0, 1, 2, NODATA])),
    st.randoms(use_true_random=False),
))


@given(series_st)
def test_composite_oracle_and_permutation(s):
    days, cells, rnd = s
    rasters = [r(c, d) for d, c in zip(days, cells)]
    out = composite(rasters, SPEC)
    for y in range(3):
        for x in range(3):
            assert out.cells[y, x] == naive_composite_pixel([(d, int(c[y, x])) for d, c in zip(days, cells)])
    shuffled = list(rasters)
    rnd.shuffle(shuffled)
    assert composite(shuffled, SPEC) == out


@given(arrays(np.uint8, (5, 4), elements=st.sampled_from([*range(9), NODATA])), st.integers(1, 5))
def test_composite_idempotent(cells, k):
    base = r(cells, 0)
    out = composite([r(cells, d) for d in range(k)], SPEC)
    assert np.array_equal(out.cells, base.cells)


def test_lcr_round_trip(tmp_path):
    cells = [[0, 1, 2, 3], [4, 5, 6, 7], [8, NODATA, 0, 6]]
    a = LandCoverRaster(np.array(cells), dt.date(2017, 2, 1), 10.0, (500.5, -20.0), 32610)
    write_lcr(tmp_path / "a.lcr", a)
    assert read_lcr(tmp_path / "a.lcr") == a
    m = CountyMask(np.eye(3, 4, dtype=bool), 10.0, (500.5, -20.0), 32610)
    write_lcr(tmp_path / "m.lcr", m)
    back = read_mask(tmp_path / "m.lcr")
    assert np.array_equal(back.inside, m.inside) and back.geometry == m.geometry


def _county(tmp_path, fips, post_days):
    obs = [r(np.full((8, 8), BUILT), d) for d in (-10, -3)]
    obs += [r(np.full((8, 8), TREES), d) for d in post_days]
    (tmp_path / "rasters" / fips).mkdir(parents=True)
    for o in obs:
        write_lcr(tmp_path / "rasters" / fips / f"{o.observed_at}.lcr", o)
    (tmp_path / "masks").mkdir(exist_ok=True)
    write_lcr(tmp_path / "masks" / f"{fips}.lcr", CountyMask(np.ones((8, 8), bool)))


def test_compute_features_and_skip_list(tmp_path):
    _county(tmp_path, "06001", [5, 40])
    _county(tmp_path, "06003", [])
    start = end = ANCHOR
    pairs = [("06003", 9, start, end), ("06001", 9, start, end), ("06005", 9, start, end)]
    run = compute_features(pairs, tmp_path / "rasters", tmp_path / "masks", windows=(15, 45))
    assert [row.fips for row in run.rows[15]] == ["06001"]
    assert run.rows[45][0].values[FEATURE_NAMES.index("f_built_trees")] == 64 * 100.0
    skipped = {(f, w): reason for f, _, w, reason in run.skipped}
    assert "post" in skipped[("06003", 15)] and "mask" in skipped[("06005", 45)]
    parallel = compute_features(pairs, tmp_path / "rasters", tmp_path / "masks", (15, 45), workers=4)
    assert parallel.skipped == run.skipped
    assert all(np.array_equal(a.values, b.values) for a, b in zip(parallel.rows[45], run.rows[45]))
    write_feature_csv(run.rows[45], tmp_path / "f.csv")
    [back] = read_feature_csv(tmp_path / "f.csv")
    assert np.array_equal(back.values, run.rows[45][0].values) and back.coverage == 1.0


def test_county_features_missing_pre():
    obs = [r(np.zeros((2, 2)), 5)]
    with pytest.raises(MissingRasters, match="pre"):
        county_features(obs, CountyMask(np.ones((2, 2), bool)), "06001", 9, ANCHOR, ANCHOR, 15)


def test_buffer_windows():
    assert BUFFER_WINDOWS == (15, 30, 45, 60)
