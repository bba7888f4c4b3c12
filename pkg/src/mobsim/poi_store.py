"""POI and check-in ingestion, great-circle distance and grid-indexed radius queries."""

from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Dict, Iterable, List, Optional, Tuple, Union

from mobsim.errors import DataError

EARTH_RADIUS_KM = 6371.0
QUERY_CACHE_SIZE = 50_000
CELL_DEG = 0.01
KM_PER_DEG = math.pi * EARTH_RADIUS_KM / 180.0

Source = Union[str, os.PathLike, bytes, IO[bytes], IO[str]]

POI_COLUMNS = ("poi_id", "name", "category", "lat", "lon")
CHECKIN_COLUMNS = ("user_id", "poi_id", "timestamp", "category")


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or math.isnan(self.lat):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0) or math.isnan(self.lon):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class Poi:
    id: str
    name: str
    category: str
    location: GeoPoint
    attraction: float = 1.0

    def __post_init__(self):
        if not (self.attraction > 0.0) or math.isinf(self.attraction):
            raise ValueError(f"POI {self.id}: attraction must be positive and finite")


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on a sphere of radius 6371 km."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon) - math.radians(a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def _cell(lat: float, lon: float) -> Tuple[int, int]:
    return (math.floor(lat / CELL_DEG), math.floor(lon / CELL_DEG))


class PoiStore:
    """Immutable POI collection with a 0.01 degree grid index.

    Longitude wraparound is not handled by the bounding-box scan; the store
    is meant for city-scale extents.
    """

    def __init__(self, pois: Iterable[Poi] = ()):
        self._pois: Dict[str, Poi] = {}
        self.grid_index: Dict[Tuple[int, int], List[str]] = defaultdict(list)
        self._by_category: Dict[str, List[Poi]] = defaultdict(list)
        for poi in pois:
            if poi.id in self._pois:
                raise DataError(f"duplicate poi_id {poi.id!r}")
            self._pois[poi.id] = poi
            self.grid_index[_cell(poi.location.lat, poi.location.lon)].append(poi.id)
            self._by_category[poi.category].append(poi)
        self.grid_index = dict(self.grid_index)
        for members in self._by_category.values():
            members.sort(key=lambda p: p.id)
        self._by_category = dict(self._by_category)
        # agents search from the same few places over and over
        self._query_cache: Dict[Tuple[float, float, float, str], Tuple[Tuple[Poi, float], ...]] = {}

    def __len__(self) -> int:
        return len(self._pois)

    def __contains__(self, poi_id: str) -> bool:
        return poi_id in self._pois

    def __getitem__(self, poi_id: str) -> Poi:
        return self._pois[poi_id]

    def get(self, poi_id: str) -> Optional[Poi]:
        return self._pois.get(poi_id)

    @property
    def pois(self) -> List[Poi]:
        return list(self._pois.values())

    @property
    def categories(self) -> frozenset:
        return frozenset(self._by_category)

    def of_category(self, category: str) -> List[Poi]:
        """All POIs of a category, sorted by id."""
        return list(self._by_category.get(category, ()))

    def query_radius(self, center: GeoPoint, radius_km: float, category: str) -> List[Poi]:
        return query_radius(self, center, radius_km, category)


def query_radius(store: PoiStore, center: GeoPoint, radius_km: float, category: str) -> List[Poi]:
    """POIs of ``category`` within ``radius_km`` of ``center``, nearest first (ties by id)."""
    return [poi for poi, _ in query_radius_with_distance(store, center, radius_km, category)]


def query_radius_with_distance(
    store: PoiStore, center: GeoPoint, radius_km: float, category: str
) -> List[Tuple[Poi, float]]:
    """Like query_radius but pairs each POI with its distance in km."""
    if not radius_km > 0:
        raise ValueError("radius_km must be positive")
    key = (center.lat, center.lon, float(radius_km), category)
    cached = store._query_cache.get(key)
    if cached is None:
        cached = tuple(_scan(store, center, radius_km, category))
        if len(store._query_cache) >= QUERY_CACHE_SIZE:
            store._query_cache.clear()
        store._query_cache[key] = cached
    return list(cached)


def _scan(store: PoiStore, center: GeoPoint, radius_km: float, category: str) -> List[Tuple[Poi, float]]:
    members = store._by_category.get(category)
    if not members:
        return []

    # 1% pad keeps the box conservative against the small-angle approximation
    dlat = 1.01 * radius_km / KM_PER_DEG
    coslat = math.cos(math.radians(min(89.9, abs(center.lat) + dlat)))
    dlon = 1.01 * radius_km / (KM_PER_DEG * coslat) if coslat > 1e-9 else 360.0
    i0, j0 = _cell(center.lat - dlat, center.lon - dlon)
    i1, j1 = _cell(center.lat + dlat, center.lon + dlon)
    n_cells = (i1 - i0 + 1) * (j1 - j0 + 1)

    if n_cells > len(members):
        pool: Iterable[Poi] = members
    else:
        pool = []
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for pid in store.grid_index.get((i, j), ()):
                    poi = store._pois[pid]
                    if poi.category == category:
                        pool.append(poi)

    hits = []
    for poi in pool:
        d = haversine(center, poi.location)
        if d <= radius_km:
            hits.append((d, poi.id, poi))
    hits.sort(key=lambda t: (t[0], t[1]))
    return [(poi, d) for d, _, poi in hits]


@dataclass(frozen=True)
class CheckinRecord:
    user_id: str
    poi_id: str
    timestamp: datetime
    category: str


@dataclass
class CheckinLog:
    records: List[CheckinRecord] = field(default_factory=list)
    per_poi_counts: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[CheckinRecord]) -> "CheckinLog":
        records = list(records)
        return cls(records=records, per_poi_counts=dict(Counter(r.poi_id for r in records)))

    def categories(self) -> Dict[str, str]:
        """poi_id -> category as recorded in the check-ins (last record wins)."""
        return {r.poi_id: r.category for r in self.records}


def _text_stream(source: Source) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"), newline="")
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _reader(source: Source, required: Tuple[str, ...], what: str):
    stream = _text_stream(source)
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
        raise DataError(f"{what} CSV header missing column(s): {', '.join(missing)}")
    return stream, reader


def _float_field(row: dict, name: str, line: int) -> float:
    raw = row.get(name)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"line {line}: field {name!r} is not a number: {raw!r}") from None
    if math.isnan(value) or math.isinf(value):
        raise DataError(f"line {line}: field {name!r} is not finite: {raw!r}")
    return value


def load_pois(source: Source) -> PoiStore:
    """Read a POI CSV (``poi_id,name,category,lat,lon[,attraction]``)."""
    stream, reader = _reader(source, POI_COLUMNS, "POI")
    has_attraction = "attraction" in (reader.fieldnames or [])
    pois: List[Poi] = []
    seen = set()
    try:
        for row in reader:
            line = reader.line_num
            if None in row or any(row.get(c) is None for c in POI_COLUMNS):
                raise DataError(f"line {line}: wrong number of fields")
            pid = row["poi_id"].strip()
            if not pid:
                raise DataError(f"line {line}: field 'poi_id' is empty")
            if pid in seen:
                raise DataError(f"line {line}: duplicate poi_id {pid!r}")
            seen.add(pid)
            category = row["category"].strip()
            if not category:
                raise DataError(f"line {line}: field 'category' is empty")
            lat = _float_field(row, "lat", line)
            lon = _float_field(row, "lon", line)
            if not -90.0 <= lat <= 90.0:
                raise DataError(f"line {line}: field 'lat' out of range: {lat}")
            if not -180.0 <= lon <= 180.0:
                raise DataError(f"line {line}: field 'lon' out of range: {lon}")
            attraction = 1.0
            if has_attraction and (row.get("attraction") or "").strip():
                attraction = _float_field(row, "attraction", line)
                if attraction <= 0:
                    raise DataError(f"line {line}: field 'attraction' must be positive")
            pois.append(Poi(pid, row["name"], category, GeoPoint(lat, lon), attraction))
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
    return PoiStore(pois)


def parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def load_checkins(source: Source) -> CheckinLog:
    """Read a check-in CSV (``user_id,poi_id,timestamp,category``); extra columns are ignored."""
    stream, reader = _reader(source, CHECKIN_COLUMNS, "check-in")
    records = []
    try:
        for row in reader:
            line = reader.line_num
            if any(row.get(c) is None for c in CHECKIN_COLUMNS):
                raise DataError(f"line {line}: wrong number of fields")
            try:
                ts = parse_timestamp(row["timestamp"])
            except ValueError:
                raise DataError(
                    f"line {line}: field 'timestamp' is not ISO-8601: {row['timestamp']!r}"
                ) from None
            records.append(
                CheckinRecord(row["user_id"].strip(), row["poi_id"].strip(), ts, row["category"].strip())
            )
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
    return CheckinLog.from_records(records)


def attraction_from_checkins(store: PoiStore, checkins: CheckinLog) -> PoiStore:
    """Rebuild ``store`` with attraction = (1 + count) / mean(1 + count) over all POIs."""
    counts = [1 + checkins.per_poi_counts.get(p.id, 0) for p in store.pois]
    if not counts:
        return store
    mean = sum(counts) / len(counts)
    return PoiStore(
        Poi(p.id, p.name, p.category, p.location, c / mean) for p, c in zip(store.pois, counts)
    )
