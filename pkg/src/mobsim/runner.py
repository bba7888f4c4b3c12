"""Run the full pipeline for many agents and days and write trace files."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from mobsim import __version__
from mobsim.activity import Agent, DayContext, DayTrace, run_day
from mobsim.config import SimConfig
from mobsim.destination import DestinationSelector
from mobsim.errors import ConfigError
from mobsim.frequency import build_all_ecdfs
from mobsim.llm import make_adapter
from mobsim.memory import AgentMemory
from mobsim.persona import Persona, generate_personas, load_stats, read_personas, validate_persona
from mobsim.poi_store import PoiStore, attraction_from_checkins, load_checkins, load_pois
from mobsim.sampling import STREAM_SIMULATION, derive_seed, make_rng

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("agent_id", "day", "start", "end", "activity", "category", "poi_id", "lat", "lon", "fallback_flags")
TRACE_FILE = "trace.jsonl"
MEMORY_FILE = "memory.jsonl"
FAILURES_FILE = "failures.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass
class RunResult:
    trace_path: Path
    manifest_path: Path
    records: int
    failures: List[dict] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def trace_records(day: DayTrace) -> List[dict]:
    rows = []
    for e in day.entries:
        a = e.activity
        rows.append(
            {
                "agent_id": day.agent_id,
                "day": day.day_index,
                "start": a.start,
                "end": a.end,
                "activity": a.activity_type,
                "category": a.location_category,
                "poi_id": e.poi.id,
                "lat": e.poi.location.lat,
                "lon": e.poi.location.lon,
                "fallback_flags": list(e.flags),
            }
        )
    return rows


def _load_inputs(config: SimConfig):
    store = load_pois(config.paths["pois"])
    checkins = load_checkins(config.paths["checkins"]) if config.paths.get("checkins") else None
    if config.attraction_from_checkins:
        if checkins is None:
            raise ConfigError("pois.attraction_from_checkins needs paths.checkins")
        store = attraction_from_checkins(store, checkins)
    if config.paths.get("personas"):
        personas = read_personas(config.paths["personas"])
        if len(personas) < config.agents:
            raise ConfigError(f"personas file has {len(personas)} personas, {config.agents} agents requested")
        personas = personas[: config.agents]
    else:
        personas = generate_personas(
            load_stats(config.paths["stats"]), store, config.agents, config.seed, config.persona
        )
    for p in personas:
        validate_persona(p, store, config.persona)
    return store, checkins, personas


def _run_agent(
    index: int, persona: Persona, store: PoiStore, selector: DestinationSelector, config: SimConfig
) -> Tuple[List[DayTrace], AgentMemory]:
    rng = make_rng(derive_seed(config.seed, index, STREAM_SIMULATION))
    memory = AgentMemory(persona.id, config.memory, config.destination.frequency.epsilon)
    adapter = make_adapter(config.llm) if config.uses_llm else None
    agent = Agent(
        persona,
        memory,
        store[persona.home],
        store[persona.workplace_or_school] if persona.workplace_or_school else None,
        adapter,
    )
    ctx = DayContext(store, selector, config.persona, config.engine, config.day_start_minutes)
    days = [run_day(agent, d, ctx, rng) for d in range(config.days)]
    return days, memory


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_simulation(config: SimConfig, out_dir: Optional[Path] = None) -> RunResult:
    """Simulate all agents and write trace, memory dump, failures and manifest.

    Agents run on a thread pool of ``config.workers``; output order is fixed
    by sorting on (agent_id, day, start) after all agents finish.
    """
    store, checkins, personas = _load_inputs(config)
    selector = DestinationSelector(store, build_all_ecdfs(checkins), config.destination)
    out = Path(out_dir or config.paths["out"])
    out.mkdir(parents=True, exist_ok=True)

    def job(item):
        i, persona = item
        return _run_agent(i, persona, store, selector, config)

    if config.workers == 1:
        results = [job(item) for item in enumerate(personas)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(job, enumerate(personas)))

    rows: List[dict] = []
    failures: List[dict] = []
    for days, _ in results:
        for day in days:
            if day.failed:
                failures.append({"agent_id": day.agent_id, "day": day.day_index, "reason": day.failed})
            else:
                rows.extend(trace_records(day))
    rows.sort(key=lambda r: (r["agent_id"], r["day"], r["start"]))
    failures.sort(key=lambda r: (r["agent_id"], r["day"]))

    trace_path = out / TRACE_FILE
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
    with open(out / MEMORY_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for _, memory in sorted(results, key=lambda r: r[1].agent_id):
            memory.dump_jsonl(fh, config.days - 1)
    with open(out / FAILURES_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for f in failures:
            fh.write(json.dumps(f) + "\n")

    manifest = {
        "kind": "mobsim-run-manifest",
        "schema_version": 1,
        "seed": config.seed,
        "config_sha256": config.config_hash(),
        "trace_sha256": _sha256(trace_path),
        "records": len(rows),
        "failed_agent_days": len(failures),
        "versions": {"mobsim": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "config": config.raw,
    }
    manifest_path = out / MANIFEST_FILE
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d trace records to %s", len(rows), trace_path)
    return RunResult(trace_path, manifest_path, len(rows), failures)
