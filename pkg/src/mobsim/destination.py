"""Turn an activity's location category into a concrete POI.

Two strategies share one candidate search:

* physical: spatial weight x quantile-mapped visit-frequency weight,
  normalized and sampled with the agent's generator;
* llm: the model picks one id from an explicit candidate list, with a single
  retry before falling back to the physical model.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mobsim.errors import CategoryError
from mobsim.frequency import (
    CategoryEcdf,
    FrequencyConfig,
    LossyCounter,
    distribution_map,
    frequency_weights,
    rank_normalize,
)
from mobsim.llm import LlmAdapter, LlmError, LlmValidationError, render
from mobsim.memory import AgentMemory, MemoryItem
from mobsim.poi_store import GeoPoint, Poi, PoiStore, haversine, query_radius_with_distance
from mobsim.sampling import sample_categorical
from mobsim.spatial import DeterrenceMode, ImpedanceParams, spatial_weight_at

logger = logging.getLogger(__name__)

STRATEGIES = ("physical", "llm")

# reason codes written to trace fallback_flags
RADIUS_WIDENED = "radius_widened"
CATEGORY_WIDE = "category_wide_search"
LLM_DESTINATION_FALLBACK = "llm_destination_fallback"


@dataclass(frozen=True)
class DestinationConfig:
    strategy: str = "physical"
    radius_km: float = 3.0
    radius_by_category: Mapping[str, float] = field(default_factory=dict)
    max_doublings: int = 6
    llm_max_candidates: int = 30
    impedance: ImpedanceParams = field(default_factory=ImpedanceParams)
    mode: DeterrenceMode = DeterrenceMode.MULTIPLY
    frequency: FrequencyConfig = field(default_factory=FrequencyConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"destination.strategy must be one of {STRATEGIES}")
        if not self.radius_km > 0 or any(not r > 0 for r in self.radius_by_category.values()):
            raise ValueError("destination radii must be > 0")

    def radius_for(self, category: str) -> float:
        return float(self.radius_by_category.get(category, self.radius_km))


@dataclass
class SelectionContext:
    current: GeoPoint
    category: str
    radius_km: float
    candidates: List[Poi]
    spatial: List[float]
    frequency: List[float]
    probabilities: List[float]


def _search(
    store: PoiStore, current: GeoPoint, category: str, radius_km: float, max_doublings: int
) -> Tuple[List[Tuple[Poi, float]], float]:
    if not radius_km > 0:
        raise ValueError("radius_km must be positive")
    if not store.of_category(category):
        raise CategoryError(f"no POIs of category {category!r} in the store")
    radius = radius_km
    for _ in range(max_doublings + 1):
        found = query_radius_with_distance(store, current, radius, category)
        if found:
            return found, radius
        radius *= 2.0
    everything = [(p, haversine(current, p.location)) for p in store.of_category(category)]
    everything.sort(key=lambda t: (t[1], t[0].id))
    return everything, math.inf


def candidate_search(
    store: PoiStore,
    current: GeoPoint,
    category: str,
    radius_km: float,
    max_doublings: int = 6,
) -> Tuple[List[Poi], float]:
    """Candidates plus the radius that produced them (``inf`` for a category-wide search)."""
    found, radius = _search(store, current, category, radius_km, max_doublings)
    return [p for p, _ in found], radius


def candidate_set(store: PoiStore, current: GeoPoint, category: str, radius_km: float, max_doublings: int = 6) -> List[Poi]:
    return candidate_search(store, current, category, radius_km, max_doublings)[0]


def selection_probabilities(spatial: Sequence[float], frequency: Sequence[float]) -> List[float]:
    """P_i = Ws_i * Wf_i / sum_j Ws_j * Wf_j."""
    if len(spatial) != len(frequency) or len(spatial) == 0:
        raise ValueError("weight lists must be the same nonzero length")
    if not min(spatial) > 0 or min(frequency) < 0:
        raise ValueError("spatial weights must be > 0 and frequency weights >= 0")
    products = [s * f for s, f in zip(spatial, frequency)]
    total = math.fsum(products)
    if not total > 0:
        raise ValueError("all candidate weights are zero")
    return [p / total for p in products]


def physical_context(
    counter: LossyCounter,
    store: PoiStore,
    ecdfs: Mapping[str, CategoryEcdf],
    current: GeoPoint,
    category: str,
    radius_km: float,
    config: DestinationConfig = DestinationConfig(),
) -> SelectionContext:
    found, radius = _search(store, current, category, radius_km, config.max_doublings)
    candidates = [p for p, _ in found]
    spatial = [spatial_weight_at(p, d, config.impedance, config.mode) for p, d in found]
    seen = counter.query()
    freqs = {p.id: seen.get(p.id, 0) for p in candidates}
    z = rank_normalize(freqs, ecdfs.get(category) or CategoryEcdf(category))
    wf = frequency_weights(distribution_map(z, config.frequency.psi), config.frequency.sigma).per_poi
    frequency = [wf[p.id] for p in candidates]
    return SelectionContext(
        current, category, radius, candidates, spatial, frequency, selection_probabilities(spatial, frequency)
    )


def select_physical(
    counter: LossyCounter,
    store: PoiStore,
    ecdfs: Mapping[str, CategoryEcdf],
    current: GeoPoint,
    category: str,
    radius_km: float,
    rng: np.random.Generator,
    config: DestinationConfig = DestinationConfig(),
) -> Poi:
    """Sample a POI from the physical model. The caller records the visit in memory."""
    ctx = physical_context(counter, store, ecdfs, current, category, radius_km, config)
    if len(ctx.candidates) == 1:
        return ctx.candidates[0]
    return ctx.candidates[sample_categorical(ctx.probabilities, rng)]


def format_history(entries) -> str:
    lines = []
    for e in entries:
        if isinstance(e, MemoryItem):
            lines.append(f"[{e.level.value} summary] {e.summary_text}")
        else:
            lines.append(
                f"day {e.day_index} {e.start // 60:02d}:{e.start % 60:02d} {e.activity_type} "
                f"at {e.category} ({e.poi_id})"
            )
    return "\n".join(lines) if lines else "(none)"


def destination_prompt(
    persona_block: str,
    activity: str,
    category: str,
    radius_km: float,
    history: str,
    listed: Sequence[Tuple[Poi, float]],
) -> str:
    rows = "\n".join(f"{p.id} | {p.name} | {d:.2f}" for p, d in listed)
    radius = "unbounded" if math.isinf(radius_km) else f"{radius_km:g}"
    return render(
        "destination",
        persona=persona_block,
        activity=activity,
        category=category,
        radius_km=radius,
        history=history,
        candidates=rows,
    )


def select_llm(
    adapter: LlmAdapter,
    memory: AgentMemory,
    current: GeoPoint,
    category: str,
    radius_km: float,
    store: PoiStore,
    rng: np.random.Generator,
    *,
    persona_block: str = "",
    activity: str = "",
    now_day: int = 0,
    ecdfs: Optional[Mapping[str, CategoryEcdf]] = None,
    config: DestinationConfig = DestinationConfig(),
    flags: Optional[List[str]] = None,
) -> Poi:
    """Ask the model to pick from the candidate list; physical model on failure.

    Reason codes for any fallback are appended to ``flags``.
    """
    flags = flags if flags is not None else []
    found, radius = _search(store, current, category, radius_km, config.max_doublings)
    listed = found[: config.llm_max_candidates]
    allowed = {p.id for p, _ in listed}
    history = format_history(memory.retrieve_history(category, memory.params.history_k, now_day))
    prompt = destination_prompt(persona_block, activity, category, radius, history, listed)

    def check(obj):
        if obj["poi_id"] not in allowed:
            raise LlmValidationError(f"poi_id {obj['poi_id']!r} is not one of the listed candidates")

    try:
        choice = adapter.complete(prompt, "destination", check=check, max_retries=1)
        return store[choice["poi_id"]]
    except LlmError as exc:
        logger.warning("destination llm fallback for %s/%s: %s", memory.agent_id, category, exc)
        flags.append(LLM_DESTINATION_FALLBACK)
        return select_physical(memory.counter, store, ecdfs or {}, current, category, radius_km, rng, config)


class DestinationSelector:
    """Binds the store, check-in ECDFs and config for repeated selections."""

    def __init__(self, store: PoiStore, ecdfs: Mapping[str, CategoryEcdf], config: DestinationConfig):
        self.store = store
        self.ecdfs = dict(ecdfs)
        self.config = config

    def select(
        self,
        memory: AgentMemory,
        current: GeoPoint,
        category: str,
        rng: np.random.Generator,
        *,
        adapter: Optional[LlmAdapter] = None,
        persona_block: str = "",
        activity: str = "",
        now_day: int = 0,
    ) -> Tuple[Poi, List[str]]:
        flags: List[str] = []
        radius = self.config.radius_for(category)
        if self.config.strategy == "llm" and adapter is not None:
            poi = select_llm(
                adapter,
                memory,
                current,
                category,
                radius,
                self.store,
                rng,
                persona_block=persona_block,
                activity=activity,
                now_day=now_day,
                ecdfs=self.ecdfs,
                config=self.config,
                flags=flags,
            )
        else:
            poi = select_physical(memory.counter, self.store, self.ecdfs, current, category, radius, rng, self.config)
        # anything beyond the base radius means the search widened; beyond the
        # last doubling it fell through to the whole category
        d = haversine(current, poi.location)
        if d > radius * 2**self.config.max_doublings:
            flags.append(CATEGORY_WIDE)
        elif d > radius:
            flags.append(RADIUS_WIDENED)
        return poi, flags
