"""Per-agent visit memory with daily/weekly/monthly rollups and importance-based pruning.

Weeks are fixed 7-day windows from day 0 and months fixed 28-day windows.
Tag counts come from trace structure, not text:

* events: activities in the window
* entities: distinct POIs
* actions: non-anchor destination selections
* attributes: distinct categories

Importance is ``sigmoid(a*D + b*R + c*F - bias)`` where D is the weighted
information density, R = exp(-(now - last_access)/tau) and
F = ln(1 + accesses)/ln(1 + access_cap). It is always recomputed from the
item's current fields.
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import IO, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from mobsim.frequency import LossyCounter
from mobsim.poi_store import GeoPoint

TAGS = ("events", "entities", "actions", "attributes")
DAYS_PER_WEEK = 7
WEEKS_PER_MONTH = 4
DAYS_PER_MONTH = DAYS_PER_WEEK * WEEKS_PER_MONTH


class Level(enum.Enum):
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"


_LEVEL_ORDER = {Level.DAILY: 0, Level.WEEKLY: 1, Level.MONTHLY: 2}


@dataclass(frozen=True)
class VisitRecord:
    day_index: int
    start: int
    activity_type: str
    category: str
    poi_id: str
    location: GeoPoint
    duration: int = 0
    anchor: bool = False


@dataclass(frozen=True)
class DensityWeights:
    events: float = 0.3
    entities: float = 0.3
    actions: float = 0.25
    attributes: float = 0.15

    def __post_init__(self):
        for tag in TAGS:
            if getattr(self, tag) < 0:
                raise ValueError(f"density weight {tag!r} must be >= 0")
        if self.events < self.attributes or self.entities < self.attributes:
            raise ValueError("events and entities must be weighted at least as high as attributes")


@dataclass(frozen=True)
class MemoryParams:
    weights: DensityWeights = field(default_factory=DensityWeights)
    a: float = 4.0
    b: float = 2.0
    c: float = 2.0
    bias: float = 2.0
    tau: float = 7.0
    access_cap: int = 100
    threshold: float = 0.5
    history_k: int = 5

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("memory.a, memory.b and memory.c must be > 0")
        if self.tau <= 0:
            raise ValueError("memory.tau must be > 0")
        if self.access_cap < 1:
            raise ValueError("memory.access_cap must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("memory.threshold must be in [0, 1]")
        if self.history_k < 1:
            raise ValueError("memory.history_k must be >= 1")

    @classmethod
    def from_config(cls, cfg: Mapping) -> "MemoryParams":
        cfg = dict(cfg)
        weights = DensityWeights(**cfg.pop("weights", {}))
        known = {k: v for k, v in cfg.items() if k in cls.__dataclass_fields__}
        return cls(weights=weights, **known)


@dataclass
class MemoryItem:
    level: Level
    period_key: int
    summary_text: str
    tag_counts: Dict[str, int]
    created_day: int
    last_access_day: int
    access_count: int = 0
    categories: Tuple[str, ...] = ()
    rolled_up: bool = False

    def density(self, weights: DensityWeights) -> float:
        return info_density(self, weights)

    def importance(self, now_day: int, params: MemoryParams) -> float:
        return importance(self, now_day, params)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def info_density(item: Union[MemoryItem, Mapping[str, int]], weights: DensityWeights) -> float:
    counts = item.tag_counts if isinstance(item, MemoryItem) else item
    weighted = sum(getattr(weights, t) * counts.get(t, 0) for t in TAGS)
    return weighted / max(1, sum(counts.get(t, 0) for t in TAGS))


def recency(item: MemoryItem, now_day: int, params: MemoryParams) -> float:
    return math.exp(-(now_day - item.last_access_day) / params.tau)


def access_frequency(access_count: int, params: MemoryParams) -> float:
    return math.log1p(access_count) / math.log1p(params.access_cap)


def importance_score(density: float, rec: float, freq: float, params: MemoryParams) -> float:
    return sigmoid(params.a * density + params.b * rec + params.c * freq - params.bias)


def importance(item: MemoryItem, now_day: int, params: MemoryParams) -> float:
    if now_day < item.created_day:
        raise ValueError("now_day precedes the item's creation")
    return importance_score(
        info_density(item, params.weights),
        recency(item, now_day, params),
        access_frequency(item.access_count, params),
        params,
    )


def _fmt_clock(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def _top_patterns(records: Iterable[VisitRecord], n: int = 3) -> List[Tuple[Tuple[str, str], int]]:
    counts = Counter((r.activity_type, r.category) for r in records)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]


class AgentMemory:
    """Memory owned by a single agent; not thread-safe."""

    def __init__(self, agent_id: str = "", params: Optional[MemoryParams] = None, epsilon: float = 0.01):
        self.agent_id = agent_id
        self.params = params or MemoryParams()
        self.raw_log: List[VisitRecord] = []
        self.counter = LossyCounter(epsilon)
        self.items: Dict[Level, Dict[int, MemoryItem]] = {lvl: {} for lvl in Level}
        # summaries ever written per level, pruned or not
        self.created: Counter = Counter()

    # --- raw log ---------------------------------------------------------------

    def record_visit(self, record: VisitRecord) -> None:
        self.raw_log.append(record)
        self.counter.observe(record.poi_id)

    def visits_for_days(self, first: int, last: int) -> List[VisitRecord]:
        return [r for r in self.raw_log if first <= r.day_index <= last]

    # --- summaries -------------------------------------------------------------

    def summarize_daily(self, day_index: int) -> MemoryItem:
        records = self.visits_for_days(day_index, day_index)
        if records:
            tags = {
                "events": len(records),
                "entities": len({r.poi_id for r in records}),
                "actions": sum(1 for r in records if not r.anchor),
                "attributes": len({r.category for r in records}),
            }
            body = "; ".join(
                f"{_fmt_clock(r.start)} {r.activity_type} at {r.category} ({r.poi_id}) {r.duration} min"
                for r in records
            )
            text = f"day {day_index}: {body}"
        else:
            tags = {t: 0 for t in TAGS}
            text = f"day {day_index}: no activities"
        item = MemoryItem(
            Level.DAILY,
            day_index,
            text,
            tags,
            created_day=day_index,
            last_access_day=day_index,
            categories=tuple(sorted({r.category for r in records})),
        )
        self.items[Level.DAILY][day_index] = item
        self.created[Level.DAILY] += 1
        return item

    def _rollup(self, level: Level, key: int, child_level: Level, child_keys: range, days: range) -> MemoryItem:
        children = []
        for ck in child_keys:
            child = self.items[child_level].get(ck)
            if child is None:
                child = (
                    self.summarize_daily(ck)
                    if child_level is Level.DAILY
                    else self.summarize_weekly(ck)
                )
            children.append(child)
        tags = {t: sum(c.tag_counts.get(t, 0) for c in children) for t in TAGS}
        records = self.visits_for_days(days.start, days.stop - 1)
        patterns = _top_patterns(records)
        if patterns:
            body = "; ".join(f"{act} at {cat} x{n}" for (act, cat), n in patterns)
        else:
            body = "no activities"
        label = "week" if level is Level.WEEKLY else "month"
        item = MemoryItem(
            level,
            key,
            f"{label} {key} (days {days.start}-{days.stop - 1}): {body}",
            tags,
            created_day=days.stop - 1,
            last_access_day=days.stop - 1,
            categories=tuple(sorted({r.category for r in records})),
        )
        for c in children:
            c.rolled_up = True
        self.items[level][key] = item
        self.created[level] += 1
        return item

    def summarize_weekly(self, week_index: int) -> MemoryItem:
        first = week_index * DAYS_PER_WEEK
        days = range(first, first + DAYS_PER_WEEK)
        return self._rollup(Level.WEEKLY, week_index, Level.DAILY, days, days)

    def summarize_monthly(self, month_index: int) -> MemoryItem:
        weeks = range(month_index * WEEKS_PER_MONTH, (month_index + 1) * WEEKS_PER_MONTH)
        first = month_index * DAYS_PER_MONTH
        return self._rollup(Level.MONTHLY, month_index, Level.WEEKLY, weeks, range(first, first + DAYS_PER_MONTH))

    def end_of_day(self, day_index: int) -> None:
        """Daily summary, calendar rollups that close today, then pruning."""
        self.summarize_daily(day_index)
        if (day_index + 1) % DAYS_PER_WEEK == 0:
            self.summarize_weekly(day_index // DAYS_PER_WEEK)
        if (day_index + 1) % DAYS_PER_MONTH == 0:
            self.summarize_monthly(day_index // DAYS_PER_MONTH)
        self.prune(self.params.threshold, day_index)

    # --- scoring and pruning ---------------------------------------------------

    def all_items(self) -> List[MemoryItem]:
        out = []
        for level in Level:
            out.extend(self.items[level][k] for k in sorted(self.items[level]))
        return out

    def importance(self, item: MemoryItem, now_day: int) -> float:
        return importance(item, now_day, self.params)

    def prune_candidates(self, threshold: float, now_day: int) -> List[MemoryItem]:
        doomed = []
        for level in Level:
            items = self.items[level]
            if not items:
                continue
            newest = max(items)
            for key in sorted(items):
                item = items[key]
                if key == newest or not item.rolled_up:
                    continue
                if self.importance(item, now_day) < threshold:
                    doomed.append(item)
        return doomed

    def prune(self, threshold: float, now_day: int) -> int:
        """Drop rolled-up items scoring below ``threshold``; the raw log is untouched."""
        doomed = self.prune_candidates(threshold, now_day)
        for item in doomed:
            del self.items[item.level][item.period_key]
        return len(doomed)

    # --- retrieval -------------------------------------------------------------

    def retrieve_history(self, category: str, k: int, now_day: int) -> List[Union[VisitRecord, MemoryItem]]:
        """The ``k`` most recent visits of ``category`` plus its best surviving summary.

        Visits are ordered newest first, ties by poi_id. The returned summary
        has its access count and last-access day bumped.
        """
        if k < 1:
            raise ValueError("k must be positive")
        visits = [r for r in self.raw_log if r.category == category]
        visits.sort(key=lambda r: (-r.day_index, -r.start, r.poi_id))
        out: List[Union[VisitRecord, MemoryItem]] = list(visits[:k])
        mentioning = [i for i in self.all_items() if category in i.categories]
        if mentioning:
            best = min(
                mentioning,
                key=lambda i: (-self.importance(i, now_day), _LEVEL_ORDER[i.level], i.period_key),
            )
            best.access_count += 1
            best.last_access_day = max(best.last_access_day, now_day)
            out.append(best)
        return out

    def recent_summary(self, max_items: int = 2) -> str:
        """Latest daily and weekly summary texts, for activity prompts."""
        parts = []
        for level in (Level.WEEKLY, Level.DAILY):
            if self.items[level]:
                parts.append(self.items[level][max(self.items[level])].summary_text)
        return "\n".join(parts[:max_items]) if parts else "(no history yet)"

    # --- inspection ------------------------------------------------------------

    def snapshot(self, now_day: int) -> List[dict]:
        rows = []
        for item in self.all_items():
            row = asdict(item)
            row["level"] = item.level.value
            row["categories"] = list(item.categories)
            row["agent_id"] = self.agent_id
            row["density"] = info_density(item, self.params.weights)
            row["recency"] = recency(item, now_day, self.params)
            row["access_frequency"] = access_frequency(item.access_count, self.params)
            row["importance"] = self.importance(item, now_day)
            rows.append(row)
        return rows

    def dump_jsonl(self, stream: IO[str], now_day: int) -> None:
        for row in self.snapshot(now_day):
            stream.write(json.dumps(row, sort_keys=True) + "\n")


def record_visit(memory: AgentMemory, record: VisitRecord) -> None:
    memory.record_visit(record)


def summarize_daily(memory: AgentMemory, day_index: int) -> MemoryItem:
    return memory.summarize_daily(day_index)


def summarize_weekly(memory: AgentMemory, week_index: int) -> MemoryItem:
    return memory.summarize_weekly(week_index)


def summarize_monthly(memory: AgentMemory, month_index: int) -> MemoryItem:
    return memory.summarize_monthly(month_index)


def prune(memory: AgentMemory, threshold: float, now_day: int) -> int:
    return memory.prune(threshold, now_day)


def retrieve_history(memory: AgentMemory, category: str, k: int, now_day: int):
    return memory.retrieve_history(category, k, now_day)
