import math
import random

import pytest

from mobsim.poi_store import GeoPoint, Poi, PoiStore, KM_PER_DEG


def offset(origin: GeoPoint, north_km: float = 0.0, east_km: float = 0.0) -> GeoPoint:
    """Small-offset point; good to ~1e-6 relative at city scale."""
    lat = origin.lat + north_km / KM_PER_DEG
    lon = origin.lon + east_km / (KM_PER_DEG * math.cos(math.radians(origin.lat)))
    return GeoPoint(lat, lon)


TOKYO = GeoPoint(35.68, 139.76)

CITY_CATEGORIES = {
    "Home": 40,
    "Office": 15,
    "School": 6,
    "Cafe": 12,
    "Casual Dining": 10,
    "Restaurant": 12,
    "Gym": 6,
    "Park": 8,
    "Supermarket": 8,
    "Convenience Store": 10,
    "Bar": 6,
    "Movie Theater": 3,
}


def make_city(n_scale: int = 1, seed: int = 7, spread_km: float = 8.0) -> PoiStore:
    rng = random.Random(seed)
    pois = []
    for cat, n in sorted(CITY_CATEGORIES.items()):
        for i in range(n * n_scale):
            loc = offset(TOKYO, rng.uniform(-spread_km, spread_km), rng.uniform(-spread_km, spread_km))
            pois.append(Poi(f"{cat[:3].lower()}{i:05d}", f"{cat} {i}", cat, loc, rng.uniform(0.5, 2.0)))
    return PoiStore(pois)


@pytest.fixture(scope="session")
def city() -> PoiStore:
    return make_city()


# --- acceptance reporting: one PASS/FAIL line per criterion in the terminal summary ---

_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, title = marker.args
    title_ok_secs = _acceptance.get(n, (title, True, 0.0))
    # setup time counts too: shared module fixtures do the heavy lifting
    secs = title_ok_secs[2] + rep.duration
    _acceptance[n] = (title, title_ok_secs[1] and not rep.failed, secs)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        title, ok, secs = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}  [{secs:.2f}s]")
