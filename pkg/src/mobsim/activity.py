"""Next-activity generation and the per-agent day loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mobsim.destination import DestinationSelector
from mobsim.errors import CategoryError
from mobsim.llm import LlmAdapter, LlmError, LlmValidationError, render
from mobsim.memory import AgentMemory, VisitRecord
from mobsim.persona import Persona, PersonaConfig, persona_block
from mobsim.poi_store import Poi, PoiStore

logger = logging.getLogger(__name__)

DAY_MINUTES = 1440
MIN_DURATION = 5
MAX_DURATION = 960
JITTER = 15
SHORT_TAIL = 20
ENGINES = ("template", "llm")

LLM_ACTIVITY_FALLBACK = "llm_activity_fallback"
TRUNCATED = "truncated_at_midnight"


@dataclass(frozen=True)
class Activity:
    activity_type: str
    location_category: str
    duration: int
    start: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass
class TraceEntry:
    activity: Activity
    poi: Poi
    flags: List[str] = field(default_factory=list)
    anchor: bool = False


@dataclass
class DayTrace:
    agent_id: str
    day_index: int
    entries: List[TraceEntry] = field(default_factory=list)
    failed: Optional[str] = None

    @property
    def activities(self) -> List[Tuple[Activity, Poi]]:
        return [(e.activity, e.poi) for e in self.entries]


# Rule table: (slot_start, slot_end, [(activity, weight, nominal minutes or None = fill the slot)])
Slot = Tuple[int, int, Sequence[Tuple[str, float, Optional[int]]]]

_EVENING = (("meal", 3, 60), ("leisure", 3, 90), ("shopping", 2, 40), ("sports and exercise", 2, 60), ("rest", 2, 60))
_DAYTIME_FREE = (("leisure", 3, 90), ("shopping", 2, 45), ("sports and exercise", 2, 60), ("rest", 3, 90))

SCHEDULES: Dict[str, List[Slot]] = {
    "employee": [
        (0, 420, (("sleep", 1, None),)),
        (420, 480, (("meal", 1, 30),)),
        (480, 720, (("work", 1, None),)),
        (720, 780, (("meal", 1, 45),)),
        (780, 1080, (("work", 1, None),)),
        (1080, 1320, _EVENING),
        (1320, 1440, (("sleep", 1, None),)),
    ],
    "student": [
        (0, 420, (("sleep", 1, None),)),
        (420, 480, (("meal", 1, 30),)),
        (480, 720, (("study", 1, None),)),
        (720, 780, (("meal", 1, 45),)),
        (780, 960, (("study", 1, None),)),
        (960, 1320, _EVENING),
        (1320, 1440, (("sleep", 1, None),)),
    ],
    "unemployed": [
        (0, 480, (("sleep", 1, None),)),
        (480, 540, (("meal", 1, 30),)),
        (540, 720, _DAYTIME_FREE),
        (720, 780, (("meal", 1, 45),)),
        (780, 1080, _DAYTIME_FREE),
        (1080, 1320, _EVENING),
        (1320, 1440, (("sleep", 1, None),)),
    ],
    "retired": [
        (0, 390, (("sleep", 1, None),)),
        (390, 450, (("meal", 1, 40),)),
        (450, 720, _DAYTIME_FREE),
        (720, 780, (("meal", 1, 50),)),
        (780, 1050, _DAYTIME_FREE),
        (1050, 1260, (("meal", 2, 60), ("rest", 3, 90), ("leisure", 1, 60))),
        (1260, 1440, (("sleep", 1, None),)),
    ],
}


def schedule_key(persona: Persona, config: PersonaConfig) -> str:
    if persona.employment in SCHEDULES:
        return persona.employment
    role = config.role(persona.employment)
    return {"worker": "employee", "student": "student"}.get(role, "unemployed")


def _slot_index(schedule: List[Slot], clock: int) -> int:
    for i, (start, end, _) in enumerate(schedule):
        if start <= clock < end:
            if end - clock < SHORT_TAIL and i + 1 < len(schedule):
                return i + 1
            return i
    return len(schedule) - 1


def _one_shot(slot: Slot) -> bool:
    options = slot[2]
    return len(options) == 1 and options[0][2] is not None


def _fallback_activity(persona: Persona, config: PersonaConfig) -> str:
    for act in ("rest", "sleep"):
        if act in persona.activity_location_list:
            return act
    home = [a for a, cats in sorted(persona.activity_location_list.items()) if config.home_category in cats]
    return home[0] if home else sorted(persona.activity_location_list)[0]


def template_next_activity(
    persona: Persona,
    clock: int,
    rng: np.random.Generator,
    config: PersonaConfig = PersonaConfig(),
    routine: Sequence[Activity] = (),
) -> Activity:
    """Time-of-day rule table with +-15 min jitter; extraversion shifts leisure odds by up to 20%.

    Fixed-length single-option slots (breakfast, lunch) happen once; free-time
    slots avoid repeating the previous activity when they can.
    """
    schedule = SCHEDULES[schedule_key(persona, config)]
    i = _slot_index(schedule, clock)
    while (
        _one_shot(schedule[i])
        and i + 1 < len(schedule)
        # an activity begun in the short tail before the slot counts as that slot's
        and any(
            schedule[i][0] - SHORT_TAIL <= a.start < schedule[i][1] and a.activity_type == schedule[i][2][0][0]
            for a in routine
        )
    ):
        i += 1
    start, end, options = schedule[i]
    alist = persona.activity_location_list
    usable = [(a, w, n) for a, w, n in options if a in alist]
    if len(usable) > 1 and routine:
        fresh = [o for o in usable if o[0] != routine[-1].activity_type]
        usable = fresh or usable
    if not usable:
        usable = [(_fallback_activity(persona, config), 1.0, 60)]
    weights = np.array(
        [w * (1.0 + 0.4 * (persona.big_five["extraversion"] - 0.5)) if a == "leisure" else w for a, w, _ in usable],
        dtype=float,
    )
    pick = int(rng.choice(len(usable), p=weights / weights.sum())) if len(usable) > 1 else 0
    act, _, nominal = usable[pick]
    cats = alist[act]
    category = cats[int(rng.integers(len(cats)))] if len(cats) > 1 else cats[0]
    if nominal is None and end >= DAY_MINUTES:
        duration = DAY_MINUTES - clock
    else:
        base = max(end - clock, MIN_DURATION) if nominal is None else nominal
        duration = max(MIN_DURATION, base + int(rng.integers(-JITTER, JITTER + 1)))
    if DAY_MINUTES - (clock + duration) < MIN_DURATION:
        duration = DAY_MINUTES - clock
    return Activity(act, category, duration, clock)


def _fmt_clock(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def next_activity_prompt(
    persona: Persona, routine: Sequence[Activity], memory_summary: str, clock: int, store: Optional[PoiStore] = None
) -> str:
    routine_text = "\n".join(
        f"{_fmt_clock(a.start)}-{_fmt_clock(a.end)} {a.activity_type} at {a.location_category}" for a in routine
    )
    return render(
        "next_activity",
        persona=persona_block(persona, store),
        activity_list=json.dumps(persona.activity_location_list, ensure_ascii=False),
        routine=routine_text or "(nothing yet)",
        history=memory_summary or "(no history yet)",
        clock=_fmt_clock(clock),
    )


def next_activity(
    persona: Persona,
    routine: Sequence[Activity],
    memory_summary: str,
    clock: int,
    engine: str,
    rng: np.random.Generator,
    adapter: Optional[LlmAdapter] = None,
    config: PersonaConfig = PersonaConfig(),
    store: Optional[PoiStore] = None,
    flags: Optional[List[str]] = None,
) -> Activity:
    """Propose the next activity starting at ``clock``, truncated at midnight.

    The model path validates activity, category and duration bounds, retries
    once, and falls back to the rule table; reason codes go into ``flags``.
    """
    if not 0 <= clock < DAY_MINUTES:
        raise ValueError("clock must be in [0, 1440)")
    flags = flags if flags is not None else []
    act: Optional[Activity] = None
    if engine == "llm" and adapter is not None:
        alist = persona.activity_location_list

        def check(obj):
            if obj["activity"] not in alist:
                raise LlmValidationError(f"activity {obj['activity']!r} is not in the activity list")
            if obj["category"] not in alist[obj["activity"]]:
                raise LlmValidationError(f"category {obj['category']!r} not allowed for {obj['activity']!r}")
            if not MIN_DURATION <= obj["duration_minutes"] <= MAX_DURATION:
                raise LlmValidationError(f"duration_minutes must be in [{MIN_DURATION}, {MAX_DURATION}]")

        prompt = next_activity_prompt(persona, routine, memory_summary, clock, store)
        try:
            obj = adapter.complete(prompt, "next_activity", check=check, max_retries=1)
            act = Activity(obj["activity"], obj["category"], obj["duration_minutes"], clock)
        except LlmError as exc:
            logger.warning("activity llm fallback for %s at %s: %s", persona.id, _fmt_clock(clock), exc)
            flags.append(LLM_ACTIVITY_FALLBACK)
    elif engine not in ENGINES:
        raise ValueError(f"unknown activity engine {engine!r}")
    if act is None:
        act = template_next_activity(persona, clock, rng, config, routine)
    if act.end > DAY_MINUTES:
        flags.append(TRUNCATED)
        act = Activity(act.activity_type, act.location_category, DAY_MINUTES - clock, clock)
    return act


@dataclass
class Agent:
    persona: Persona
    memory: AgentMemory
    home: Poi
    workplace: Optional[Poi] = None
    adapter: Optional[LlmAdapter] = None


@dataclass
class DayContext:
    store: PoiStore
    selector: DestinationSelector
    persona_config: PersonaConfig = field(default_factory=PersonaConfig)
    engine: str = "template"
    day_start: int = 0


def resolve_anchor(agent: Agent, category: str, config: PersonaConfig) -> Optional[Poi]:
    if category == config.home_category:
        return agent.home
    if agent.workplace is not None and category == agent.workplace.category:
        return agent.workplace
    return None


def run_day(agent: Agent, day_index: int, ctx: DayContext, rng: np.random.Generator) -> DayTrace:
    """Simulate one day from ``ctx.day_start`` at home until midnight."""
    persona = agent.persona
    trace = DayTrace(persona.id, day_index)
    block = persona_block(persona, ctx.store)
    clock = ctx.day_start
    current = agent.home.location
    routine: List[Activity] = []
    while clock < DAY_MINUTES:
        flags: List[str] = []
        act = next_activity(
            persona,
            routine,
            agent.memory.recent_summary(),
            clock,
            ctx.engine,
            rng,
            adapter=agent.adapter,
            config=ctx.persona_config,
            store=ctx.store,
            flags=flags,
        )
        poi = resolve_anchor(agent, act.location_category, ctx.persona_config)
        anchor = poi is not None
        if poi is None:
            try:
                poi, dflags = ctx.selector.select(
                    agent.memory,
                    current,
                    act.location_category,
                    rng,
                    adapter=agent.adapter,
                    persona_block=block,
                    activity=act.activity_type,
                    now_day=day_index,
                )
            except CategoryError as exc:
                trace.failed = f"agent {persona.id} activity {act.activity_type!r}: {exc}"
                logger.error("day %d aborted: %s", day_index, trace.failed)
                return trace
            flags.extend(dflags)
        agent.memory.record_visit(
            VisitRecord(day_index, act.start, act.activity_type, act.location_category, poi.id, poi.location, act.duration, anchor)
        )
        trace.entries.append(TraceEntry(act, poi, flags, anchor))
        routine.append(act)
        clock = act.end
        current = poi.location
    agent.memory.end_of_day(day_index)
    return trace
