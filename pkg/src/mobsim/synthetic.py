"""Synthetic city datasets for demos and tests (POIs, check-ins, population stats, config)."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import yaml

from mobsim.poi_store import KM_PER_DEG

CATEGORY_SHARES: Dict[str, float] = {
    "Home": 0.30,
    "Office": 0.12,
    "School": 0.03,
    "Cafe": 0.08,
    "Casual Dining": 0.07,
    "Restaurant": 0.09,
    "Gym": 0.04,
    "Park": 0.05,
    "Supermarket": 0.05,
    "Convenience Store": 0.08,
    "Bar": 0.06,
    "Movie Theater": 0.03,
}

DEMO_STATS = {
    "age_buckets": {"18-29": 0.22, "30-44": 0.28, "45-64": 0.32, "65+": 0.18},
    "genders": {"female": 0.51, "male": 0.49},
    "employment": {"employee": 0.55, "student": 0.12, "unemployed": 0.13, "retired": 0.20},
    "occupations_by_employment": {
        "employee": {"office worker": 0.5, "sales": 0.2, "engineer": 0.2, "healthcare": 0.1},
        "student": {"university student": 0.6, "high school student": 0.4},
        "unemployed": {"none": 1.0},
        "retired": {"none": 1.0},
    },
}


def write_demo_dataset(
    directory,
    n_pois: int = 2000,
    n_checkins: int = 5000,
    seed: int = 0,
    center=(35.68, 139.76),
    spread_km: float = 10.0,
    config_overrides: Optional[dict] = None,
) -> Dict[str, Path]:
    """Write pois.csv, checkins.csv, stats.yaml and config.yaml under ``directory``."""
    rng = np.random.default_rng(seed)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    cats = list(CATEGORY_SHARES)
    shares = np.array([CATEGORY_SHARES[c] for c in cats])
    counts = np.maximum(1, np.floor(shares / shares.sum() * n_pois).astype(int))
    counts[0] += n_pois - counts.sum()
    lat0, lon0 = center
    rows = []
    for cat, n in zip(cats, counts):
        for i in range(int(n)):
            # denser core: radial distance ~ half-normal
            r = abs(rng.normal(0, spread_km / 2))
            theta = rng.uniform(0, 2 * math.pi)
            lat = lat0 + r * math.sin(theta) / KM_PER_DEG
            lon = lon0 + r * math.cos(theta) / (KM_PER_DEG * math.cos(math.radians(lat0)))
            pid = f"{cat.replace(' ', '')[:4].lower()}{i:05d}"
            rows.append((pid, f"{cat} #{i}", cat, f"{lat:.6f}", f"{lon:.6f}"))
    with open(out / "pois.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["poi_id", "name", "category", "lat", "lon"])
        w.writerows(rows)

    # check-ins: Zipf-like popularity within each category
    visitable = [r for r in rows if r[2] != "Home"]
    pop = rng.zipf(1.6, len(visitable)).astype(float)
    pop /= pop.sum()
    picks = rng.choice(len(visitable), size=n_checkins, p=pop)
    with open(out / "checkins.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "poi_id", "timestamp", "category"])
        for k, idx in enumerate(picks):
            day = 1 + int(rng.integers(28))
            minute = int(rng.integers(6 * 60, 23 * 60))
            ts = f"2012-04-{day:02d}T{minute // 60:02d}:{minute % 60:02d}:00"
            w.writerow([f"u{int(rng.integers(200)):03d}", visitable[idx][0], ts, visitable[idx][2]])

    (out / "stats.yaml").write_text(yaml.safe_dump(DEMO_STATS, sort_keys=False), encoding="utf-8")
    config = {
        "simulation": {"seed": seed, "agents": 10, "days": 7, "day_start_minutes": 0, "workers": 1},
        "paths": {"pois": "pois.csv", "checkins": "checkins.csv", "stats": "stats.yaml", "out": "out"},
        "activity": {"engine": "template"},
        "destination": {"strategy": "physical", "radius_km": 3.0},
        "impedance": {"r0_km": 1.5, "beta": 1.75, "k_km": 400.0, "mode": "multiply"},
        "frequency": {"epsilon": 0.01, "sigma": 0.1, "psi": "identity"},
    }
    for section, values in (config_overrides or {}).items():
        if isinstance(values, dict):
            config.setdefault(section, {}).update(values)
        else:
            config[section] = values
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return {k: out / f for k, f in (("pois", "pois.csv"), ("checkins", "checkins.csv"), ("stats", "stats.yaml"), ("config", "config.yaml"))}
