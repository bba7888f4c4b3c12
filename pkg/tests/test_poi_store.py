import io
import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from mobsim.errors import DataError
from mobsim.poi_store import (
    GeoPoint,
    Poi,
    PoiStore,
    attraction_from_checkins,
    haversine,
    load_checkins,
    load_pois,
    query_radius,
)

from conftest import TOKYO, offset

POI_HEADER = "poi_id,name,category,lat,lon\n"


def test_load_pois_header_only():
    store = load_pois(POI_HEADER.encode())
    assert len(store) == 0
    assert store.categories == frozenset()


def test_load_pois_default_attraction():
    store = load_pois((POI_HEADER + "p1,Gym A,Gym,35.68,139.76\n").encode())
    assert store["p1"].attraction == 1.0
    assert store["p1"].category == "Gym"
    assert store["p1"].location == GeoPoint(35.68, 139.76)


def test_load_pois_explicit_attraction_and_path(tmp_path):
    path = tmp_path / "pois.csv"
    path.write_text("poi_id,name,category,lat,lon,attraction\np1,A,Cafe,1,2,2.5\np2,B,Cafe,1,2,\n")
    store = load_pois(path)
    assert store["p1"].attraction == 2.5
    assert store["p2"].attraction == 1.0


def test_load_pois_duplicates_reported_first():
    rng = random.Random(3)
    rows = [f"p{i},n{i},Cafe,{35 + rng.random():.5f},{139 + rng.random():.5f}" for i in range(10_000)]
    # duplicate three ids; p17 is the first repeat encountered in file order
    rows.insert(5000, rows[17])
    rows.insert(7000, rows[42])
    rows.insert(9000, rows[99])
    text = POI_HEADER + "\n".join(rows) + "\n"
    with pytest.raises(DataError, match="duplicate poi_id 'p17'"):
        load_pois(text.encode())


@pytest.mark.parametrize(
    "row, field",
    [
        ("p1,A,Cafe,abc,139", "lat"),
        ("p1,A,Cafe,35,", "lon"),
        ("p1,A,Cafe,95,139", "lat"),
        ("p1,A,Cafe,35,181", "lon"),
        ("p1,A,,35,139", "category"),
    ],
)
def test_load_pois_bad_rows_name_line_and_field(row, field):
    text = POI_HEADER + "p0,Z,Cafe,35,139\n" + row + "\n"
    with pytest.raises(DataError) as err:
        load_pois(text.encode())
    assert "line 3" in str(err.value)
    assert field in str(err.value)


def test_load_pois_missing_column():
    with pytest.raises(DataError, match="lon"):
        load_pois(b"poi_id,name,category,lat\n")


def test_load_checkins_empty_and_counts():
    header = "user_id,poi_id,timestamp,category\n"
    assert load_checkins(header.encode()).per_poi_counts == {}
    log = load_checkins(
        (header + "u1,p1,2012-04-03T18:00:09,Gym\nu2,p1,2012-04-03T19:00:00Z,Gym\nu1,p1,2012-04-04,Gym\n").encode()
    )
    assert log.per_poi_counts == {"p1": 3}


def test_load_checkins_ignores_unknown_columns():
    text = "user_id,venue_name,poi_id,timestamp,category\nu1,X,p9,2012-04-03T18:00:09+09:00,Bar\n"
    log = load_checkins(io.BytesIO(text.encode()))
    assert log.per_poi_counts == {"p9": 1}


def test_load_checkins_bad_timestamp_names_line():
    text = "user_id,poi_id,timestamp,category\nu1,p1,2012-04-03,Gym\nu1,p1,yesterday,Gym\n"
    with pytest.raises(DataError, match="line 3"):
        load_checkins(text.encode())


def test_load_checkins_matches_exact_oracle():
    rng = random.Random(11)
    rows = [(f"u{rng.randrange(20)}", f"p{rng.randrange(50)}") for _ in range(1000)]
    text = "user_id,poi_id,timestamp,category\n" + "".join(
        f"{u},{p},2012-04-{1 + i % 28:02d}T10:00:00,Cafe\n" for i, (u, p) in enumerate(rows)
    )
    oracle = {}
    for _, p in rows:
        oracle[p] = oracle.get(p, 0) + 1
    assert load_checkins(text.encode()).per_poi_counts == oracle


def test_haversine_reference_values():
    a = GeoPoint(0, 0)
    assert haversine(a, a) == 0.0
    assert haversine(a, GeoPoint(0, 1)) == pytest.approx(math.pi * 6371 / 180, abs=1e-3)
    assert haversine(a, GeoPoint(0, 1)) == pytest.approx(111.1949, abs=1e-3)
    assert haversine(a, GeoPoint(90, 0)) == pytest.approx(10007.543, abs=1e-2)


def test_geopoint_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, -181)


def test_poi_rejects_nonpositive_attraction():
    with pytest.raises(ValueError):
        Poi("x", "x", "Cafe", TOKYO, 0.0)


coords = st.builds(
    GeoPoint,
    st.floats(-90, 90, allow_nan=False),
    st.floats(-180, 180, allow_nan=False),
)


@settings(max_examples=1000, deadline=None)
@given(coords, coords)
def test_haversine_symmetric(a, b):
    assert haversine(a, b) == haversine(b, a)
    assert haversine(a, b) >= 0.0


@settings(max_examples=300, deadline=None)
@given(coords, coords, coords)
def test_haversine_triangle(a, b, c):
    assert haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-6


def test_query_radius_empty_and_zero_distance():
    store = PoiStore([Poi("a", "a", "Cafe", TOKYO), Poi("b", "b", "Cafe", offset(TOKYO, 0.3))])
    assert query_radius(store, TOKYO, 1.0, "Gym") == []
    result = query_radius(store, TOKYO, 1.0, "Cafe")
    assert [p.id for p in result] == ["a", "b"]


def test_query_radius_tie_order_by_id():
    pois = [Poi(pid, pid, "Cafe", offset(TOKYO, 1.0)) for pid in ("z", "m", "a")]
    store = PoiStore(pois)
    assert [p.id for p in store.query_radius(TOKYO, 2.0, "Cafe")] == ["a", "m", "z"]


def _linear_scan(store, center, radius, category):
    return sorted(
        (p for p in store.pois if p.category == category and haversine(center, p.location) <= radius),
        key=lambda p: (haversine(center, p.location), p.id),
    )


@pytest.mark.parametrize("seed", range(5))
def test_query_radius_matches_linear_scan(seed):
    rng = random.Random(seed)
    cats = ["Cafe", "Gym", "Bar"]
    pois = [
        Poi(f"p{i}", "", rng.choice(cats), offset(TOKYO, rng.uniform(-20, 20), rng.uniform(-20, 20)))
        for i in range(1000)
    ]
    store = PoiStore(pois)
    for _ in range(20):
        center = offset(TOKYO, rng.uniform(-20, 20), rng.uniform(-20, 20))
        cat = rng.choice(cats)
        for radius in (0.5, 5.0, 60.0):
            assert store.query_radius(center, radius, cat) == _linear_scan(store, center, radius, cat)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 10_000),
    st.integers(1, 2000),
    st.floats(0.05, 30.0),
    st.floats(-60, 60),
    st.floats(-170, 170),
)
def test_query_radius_property(seed, n, radius, lat, lon):
    rng = random.Random(seed)
    base = GeoPoint(lat, lon)
    pois = [
        Poi(f"p{i}", "", rng.choice("AB"), offset(base, rng.uniform(-15, 15), rng.uniform(-15, 15)))
        for i in range(n)
    ]
    store = PoiStore(pois)
    center = offset(base, rng.uniform(-10, 10), rng.uniform(-10, 10))
    assert store.query_radius(center, radius, "A") == _linear_scan(store, center, radius, "A")
    # every POI sits in exactly one cell
    indexed = Counter(pid for ids in store.grid_index.values() for pid in ids)
    assert sorted(indexed) == sorted(p.id for p in pois)
    assert set(indexed.values()) == {1}


def test_attraction_from_checkins():
    store = PoiStore([Poi("a", "", "Cafe", TOKYO), Poi("b", "", "Cafe", TOKYO)])
    log = load_checkins(b"user_id,poi_id,timestamp,category\nu,a,2012-01-01,Cafe\nu,a,2012-01-01,Cafe\n")
    scaled = attraction_from_checkins(store, log)
    # counts+1 = 3, 1 ; mean 2
    assert scaled["a"].attraction == pytest.approx(1.5)
    assert scaled["b"].attraction == pytest.approx(0.5)
