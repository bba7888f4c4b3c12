"""Synthetic personas: demographics, Big Five traits, anchor locations, activity-location lists."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mobsim.destination import candidate_set
from mobsim.errors import ConfigError, DataError
from mobsim.llm import LlmAdapter, LlmError, LlmValidationError, render
from mobsim.poi_store import Poi, PoiStore
from mobsim.sampling import STREAM_PERSONA, derive_seed, make_rng, sample_categorical

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BIG_FIVE = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")

Distribution = Tuple[Tuple[str, float], ...]


def _distribution(raw, name: str) -> Distribution:
    if isinstance(raw, Mapping):
        pairs = tuple((str(k), float(v)) for k, v in raw.items())
    else:
        try:
            pairs = tuple((str(k), float(v)) for k, v in raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a mapping or a list of [label, probability]") from None
    if not pairs:
        raise ConfigError(f"{name}: empty distribution")
    if any(p < 0 for _, p in pairs):
        raise ConfigError(f"{name}: negative probability")
    if abs(math.fsum(p for _, p in pairs) - 1.0) > 1e-9:
        raise ConfigError(f"{name}: probabilities sum to {math.fsum(p for _, p in pairs)}, not 1")
    return pairs


@dataclass(frozen=True)
class PopulationStats:
    age_buckets: Distribution
    genders: Distribution
    employment: Distribution
    occupations_by_employment: Mapping[str, Distribution]

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PopulationStats":
        try:
            employment = _distribution(raw["employment"], "employment")
            occ_raw = raw["occupations_by_employment"]
            stats = cls(
                age_buckets=_distribution(raw["age_buckets"], "age_buckets"),
                genders=_distribution(raw["genders"], "genders"),
                employment=employment,
                occupations_by_employment={
                    str(k): _distribution(v, f"occupations_by_employment.{k}") for k, v in occ_raw.items()
                },
            )
        except KeyError as exc:
            raise ConfigError(f"population stats missing key {exc.args[0]!r}") from None
        missing = [label for label, _ in employment if label not in stats.occupations_by_employment]
        if missing:
            raise ConfigError(f"occupations_by_employment has no row for employment label(s) {missing}")
        return stats


def load_stats(path) -> PopulationStats:
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return PopulationStats.from_dict(raw)


@dataclass(frozen=True)
class PersonaConfig:
    home_category: str = "Home"
    work_category: str = "Office"
    school_category: str = "School"
    commute_radius_km: float = 10.0
    worker_labels: Tuple[str, ...] = ("employee",)
    student_labels: Tuple[str, ...] = ("student",)

    @classmethod
    def from_config(cls, cfg: Mapping) -> "PersonaConfig":
        kw = {k: cfg[k] for k in cls.__dataclass_fields__ if k in cfg}
        for k in ("worker_labels", "student_labels"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)

    def role(self, employment: str) -> Optional[str]:
        if employment in self.worker_labels:
            return "worker"
        if employment in self.student_labels:
            return "student"
        return None

    def anchor_category(self, employment: str) -> Optional[str]:
        role = self.role(employment)
        if role == "worker":
            return self.work_category
        if role == "student":
            return self.school_category
        return None


@dataclass
class Persona:
    id: str
    age_bucket: str
    gender: str
    employment: str
    occupation: str
    big_five: Dict[str, float]
    home: Optional[str] = None
    workplace_or_school: Optional[str] = None
    activity_location_list: Dict[str, List[str]] = field(default_factory=dict)

    def to_json(self) -> str:
        row = {"schema_version": SCHEMA_VERSION}
        row.update(
            id=self.id,
            age_bucket=self.age_bucket,
            gender=self.gender,
            employment=self.employment,
            occupation=self.occupation,
            big_five={k: self.big_five[k] for k in BIG_FIVE},
            home=self.home,
            workplace_or_school=self.workplace_or_school,
            activity_location_list=self.activity_location_list,
        )
        return json.dumps(row, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "Persona":
        row = json.loads(line)
        if row.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported persona schema_version {row.get('schema_version')!r}")
        traits = row["big_five"]
        if set(traits) != set(BIG_FIVE) or any(not 0.0 <= float(v) <= 1.0 for v in traits.values()):
            raise DataError(f"persona {row.get('id')!r}: invalid big_five block")
        return cls(
            id=row["id"],
            age_bucket=row["age_bucket"],
            gender=row["gender"],
            employment=row["employment"],
            occupation=row["occupation"],
            big_five={k: float(traits[k]) for k in BIG_FIVE},
            home=row.get("home"),
            workplace_or_school=row.get("workplace_or_school"),
            activity_location_list={k: list(v) for k, v in row["activity_location_list"].items()},
        )


def write_personas(personas: Iterable[Persona], stream: IO[str]) -> None:
    for p in personas:
        stream.write(p.to_json() + "\n")


def read_personas(path) -> List[Persona]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Persona.from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return out


def _draw(dist: Distribution, rng: np.random.Generator) -> str:
    return dist[sample_categorical([p for _, p in dist], rng)][0]


def sample_persona(stats: PopulationStats, rng: np.random.Generator, persona_id: str = "agent-00000") -> Persona:
    """Independent draws per attribute, occupation conditioned on employment, traits ~ U[0,1]."""
    age = _draw(stats.age_buckets, rng)
    gender = _draw(stats.genders, rng)
    employment = _draw(stats.employment, rng)
    occupation = _draw(stats.occupations_by_employment[employment], rng)
    traits = rng.random(len(BIG_FIVE))
    return Persona(persona_id, age, gender, employment, occupation, {k: float(v) for k, v in zip(BIG_FIVE, traits)})


def assign_primary_locations(
    persona: Persona, store: PoiStore, rng: np.random.Generator, config: PersonaConfig = PersonaConfig()
) -> Persona:
    homes = store.of_category(config.home_category)
    if not homes:
        raise ConfigError(f"no POIs of residential category {config.home_category!r} (persona.home_category)")
    home = homes[int(rng.integers(len(homes)))]
    persona.home = home.id
    persona.workplace_or_school = None
    anchor = config.anchor_category(persona.employment)
    if anchor is not None:
        if not store.of_category(anchor):
            raise ConfigError(f"no POIs of category {anchor!r} for {persona.employment} personas")
        options = candidate_set(store, home.location, anchor, config.commute_radius_km)
        persona.workplace_or_school = options[int(rng.integers(len(options)))].id
    return persona


# activity -> categories; {home}/{work}/{school} resolve from PersonaConfig
TEMPLATE_ACTIVITIES: Dict[str, List[str]] = {
    "sleep": ["{home}"],
    "meal": ["Cafe", "Casual Dining", "{home}", "Restaurant"],
    "shopping": ["Supermarket", "Convenience Store"],
    "leisure": ["Park", "Bar", "Movie Theater", "Cafe"],
    "sports and exercise": ["Gym", "Park"],
    "rest": ["{home}"],
}
ROLE_ACTIVITIES = {"worker": {"work": ["{work}"]}, "student": {"study": ["{school}"]}}


def _resolve(cat: str, config: PersonaConfig) -> str:
    return cat.format(home=config.home_category, work=config.work_category, school=config.school_category)


def anchor_entries(persona: Persona, config: PersonaConfig) -> Dict[str, List[str]]:
    entries = {"sleep": [config.home_category]}
    role = config.role(persona.employment)
    for act, cats in ROLE_ACTIVITIES.get(role, {}).items():
        entries[act] = [_resolve(c, config) for c in cats]
    return entries


def template_activity_list(persona: Persona, store: PoiStore, config: PersonaConfig = PersonaConfig()) -> Dict[str, List[str]]:
    available = store.categories
    table = dict(TEMPLATE_ACTIVITIES)
    table.update(ROLE_ACTIVITIES.get(config.role(persona.employment), {}))
    out: Dict[str, List[str]] = {}
    for act, cats in table.items():
        resolved = [c for c in (_resolve(c, config) for c in cats) if c in available]
        if resolved:
            out[act] = resolved
    return out


def persona_block(persona: Persona, store: Optional[PoiStore] = None) -> str:
    def describe(pid):
        if pid is None:
            return "none"
        poi = store.get(pid) if store is not None else None
        return f"{poi.name} ({poi.category}, id {pid})" if poi else pid

    return render(
        "persona_gen",
        agent_id=persona.id,
        age_bucket=persona.age_bucket,
        gender=persona.gender,
        employment=persona.employment,
        occupation=persona.occupation,
        home=describe(persona.home),
        workplace=describe(persona.workplace_or_school),
        **{k: f"{persona.big_five[k]:.2f}" for k in BIG_FIVE},
    )


LIST_LLM_FALLBACK = "activity_list_llm_fallback"


def generate_activity_location_list(
    engine: str,
    persona: Persona,
    store: PoiStore,
    config: PersonaConfig = PersonaConfig(),
    adapter: Optional[LlmAdapter] = None,
    flags: Optional[List[str]] = None,
) -> Dict[str, List[str]]:
    """Activity -> candidate categories, from the template table or the model.

    Model output must use store categories only; one retry, then the template
    table. Anchor entries (sleep at home, work/study at the anchor category)
    are always present.
    """
    if engine == "template" or adapter is None:
        return template_activity_list(persona, store, config)
    if engine != "llm":
        raise ConfigError(f"unknown activity-list engine {engine!r}")
    available = store.categories

    def check(obj):
        unknown = sorted({c for cats in obj.values() for c in cats if c not in available})
        if unknown:
            raise LlmValidationError(f"unknown categories {unknown}")

    prompt = render(
        "activity_list", persona=persona_block(persona, store), categories=", ".join(sorted(available))
    )
    try:
        result = adapter.complete(prompt, "activity_list", check=check, max_retries=1)
    except LlmError as exc:
        logger.warning("activity list llm fallback for %s: %s", persona.id, exc)
        if flags is not None:
            flags.append(LIST_LLM_FALLBACK)
        return template_activity_list(persona, store, config)
    out = {str(k): list(dict.fromkeys(v)) for k, v in result.items()}
    for act, cats in anchor_entries(persona, config).items():
        if all(c in available for c in cats):
            out[act] = cats
    return out


def generate_personas(
    stats: PopulationStats,
    store: PoiStore,
    count: int,
    seed: int,
    config: PersonaConfig = PersonaConfig(),
    engine: str = "template",
    adapter_factory=None,
) -> List[Persona]:
    """``count`` personas, each from its own derived generator."""
    if count < 1:
        raise ConfigError("persona count must be >= 1")
    personas = []
    for i in range(count):
        rng = make_rng(derive_seed(seed, i, STREAM_PERSONA))
        p = sample_persona(stats, rng, f"agent-{i:05d}")
        assign_primary_locations(p, store, rng, config)
        adapter = adapter_factory() if adapter_factory is not None else None
        p.activity_location_list = generate_activity_location_list(engine, p, store, config, adapter)
        personas.append(p)
    return personas


def validate_persona(persona: Persona, store: PoiStore, config: PersonaConfig) -> None:
    """Check a loaded persona against the store; raises DataError."""
    if persona.home is None or persona.home not in store:
        raise DataError(f"persona {persona.id}: home POI {persona.home!r} not in store")
    needs_anchor = config.anchor_category(persona.employment) is not None
    if needs_anchor != (persona.workplace_or_school is not None):
        raise DataError(f"persona {persona.id}: workplace/school presence does not match employment")
    if persona.workplace_or_school is not None and persona.workplace_or_school not in store:
        raise DataError(f"persona {persona.id}: workplace/school POI not in store")
    if not persona.activity_location_list:
        raise DataError(f"persona {persona.id}: empty activity-location list")
    for act, cats in persona.activity_location_list.items():
        if not cats:
            raise DataError(f"persona {persona.id}: activity {act!r} has no categories")
        for c in cats:
            if not store.of_category(c):
                raise DataError(f"persona {persona.id}: category {c!r} has no POIs in the store")
