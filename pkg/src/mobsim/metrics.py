"""Trace post-processing: GeoJSON export and mobility metrics."""

from __future__ import annotations

import json
import math
from collections import Counter, OrderedDict, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from mobsim.errors import DataError
from mobsim.poi_store import CheckinLog, GeoPoint, PoiStore, haversine

REQUIRED_FIELDS = ("agent_id", "day", "start", "end", "activity", "category", "poi_id", "lat", "lon")
JUMP_EDGES_KM = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0)


def read_trace(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(row, dict):
                raise DataError(f"{path}: line {lineno}: expected a JSON object")
            missing = [f for f in REQUIRED_FIELDS if f not in row]
            if missing:
                raise DataError(f"{path}: line {lineno}: missing field(s) {missing}")
            yield row


def _group_days(rows) -> "OrderedDict[Tuple[str, int], List[dict]]":
    groups: "OrderedDict[Tuple[str, int], List[dict]]" = OrderedDict()
    for row in rows:
        groups.setdefault((row["agent_id"], row["day"]), []).append(row)
    return groups


def export_geojson(trace_path, out_path) -> dict:
    """One LineString per agent-day; a single visit repeats its coordinate."""
    features = []
    for (agent, day), rows in _group_days(read_trace(trace_path)).items():
        coords = [[r["lon"], r["lat"]] for r in rows]
        if len(coords) == 1:
            coords = coords * 2
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {
                    "agent_id": agent,
                    "day": day,
                    "visits": len(rows),
                    "activities": [r["activity"] for r in rows],
                    "poi_ids": [r["poi_id"] for r in rows],
                },
            }
        )
    collection = {"type": "FeatureCollection", "features": features}
    Path(out_path).write_text(json.dumps(collection, ensure_ascii=False) + "\n", encoding="utf-8")
    return collection


@dataclass
class MetricsReport:
    jump_lengths: Dict[str, object]
    radius_of_gyration: Dict[str, float]
    category_histogram: Dict[str, int]
    visits: int
    ks_statistic_vs_reference: Optional[float] = None
    reference_jumps: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def jump_histogram(jumps: Sequence[float], edges: Sequence[float] = JUMP_EDGES_KM) -> Dict[str, object]:
    """Counts per [edge_i, edge_i+1) with the last bin open-ended."""
    counts = [0] * len(edges)
    for j in jumps:
        i = int(np.searchsorted(edges, j, side="right")) - 1
        counts[max(i, 0)] += 1
    return {
        "edges_km": list(edges),
        "counts": counts,
        "n": len(jumps),
        "mean_km": float(np.mean(jumps)) if len(jumps) else 0.0,
        "median_km": float(np.median(jumps)) if len(jumps) else 0.0,
    }


def radius_of_gyration(points: Sequence[GeoPoint]) -> float:
    """RMS great-circle distance to the lat/lon-mean centroid."""
    if not points:
        return 0.0
    centroid = GeoPoint(
        math.fsum(p.lat for p in points) / len(points), math.fsum(p.lon for p in points) / len(points)
    )
    return math.sqrt(math.fsum(haversine(centroid, p) ** 2 for p in points) / len(points))


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    return float(stats.ks_2samp(a, b).statistic)


def trace_jumps(rows) -> List[float]:
    jumps = []
    for day_rows in _group_days(rows).values():
        for prev, cur in zip(day_rows, day_rows[1:]):
            jumps.append(haversine(GeoPoint(prev["lat"], prev["lon"]), GeoPoint(cur["lat"], cur["lon"])))
    return jumps


def checkin_jumps(checkins: CheckinLog, store: PoiStore) -> List[float]:
    """Jumps between a user's consecutive same-day check-ins at known POIs."""
    by_user = defaultdict(list)
    for r in checkins.records:
        if r.poi_id in store:
            by_user[r.user_id].append(r)
    jumps = []
    for user in sorted(by_user):
        recs = sorted(by_user[user], key=lambda r: (r.timestamp, r.poi_id))
        for prev, cur in zip(recs, recs[1:]):
            if prev.timestamp.date() == cur.timestamp.date():
                jumps.append(haversine(store[prev.poi_id].location, store[cur.poi_id].location))
    return jumps


def compute_metrics(
    trace_path,
    reference: Optional[CheckinLog] = None,
    store: Optional[PoiStore] = None,
) -> MetricsReport:
    rows = list(read_trace(trace_path))
    jumps = trace_jumps(rows)
    by_agent = defaultdict(list)
    for r in rows:
        by_agent[r["agent_id"]].append(GeoPoint(r["lat"], r["lon"]))
    report = MetricsReport(
        jump_lengths=jump_histogram(jumps),
        radius_of_gyration={a: radius_of_gyration(pts) for a, pts in sorted(by_agent.items())},
        category_histogram=dict(sorted(Counter(r["category"] for r in rows).items())),
        visits=len(rows),
    )
    if reference is not None:
        if store is None:
            raise ValueError("a POI store is needed to locate reference check-ins")
        ref = checkin_jumps(reference, store)
        report.reference_jumps = len(ref)
        if jumps and ref:
            report.ks_statistic_vs_reference = ks_statistic(jumps, ref)
    return report
