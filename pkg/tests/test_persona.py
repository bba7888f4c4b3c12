from collections import Counter

import numpy as np
import pytest

from conftest import TOKYO, offset
from mobsim.errors import ConfigError, DataError
from mobsim.llm import ScriptedMock
from mobsim.persona import (
    LIST_LLM_FALLBACK,
    Persona,
    PersonaConfig,
    PopulationStats,
    assign_primary_locations,
    generate_activity_location_list,
    generate_personas,
    persona_block,
    read_personas,
    sample_persona,
    template_activity_list,
    validate_persona,
    write_personas,
)
from mobsim.poi_store import Poi, PoiStore

STATS = {
    "age_buckets": {"18-29": 0.3, "30-64": 0.5, "65+": 0.2},
    "genders": {"male": 0.5, "female": 0.5},
    "employment": {"employee": 0.6, "student": 0.25, "retired": 0.15},
    "occupations_by_employment": {
        "employee": {"clerk": 0.7, "nurse": 0.3},
        "student": {"undergraduate": 1.0},
        "retired": {"none": 1.0},
    },
}


def stats():
    return PopulationStats.from_dict(STATS)


def test_single_bucket_fully_determined():
    s = PopulationStats.from_dict(
        {
            "age_buckets": [["30-44", 1.0]],
            "genders": [["female", 1.0]],
            "employment": [["employee", 1.0]],
            "occupations_by_employment": {"employee": [["nurse", 1.0]]},
        }
    )
    p = sample_persona(s, np.random.default_rng(9))
    assert (p.age_bucket, p.gender, p.employment, p.occupation) == ("30-44", "female", "employee", "nurse")


def test_fixed_seed_repeats():
    a = sample_persona(stats(), np.random.default_rng(42))
    b = sample_persona(stats(), np.random.default_rng(42))
    assert a == b


def test_gender_marginal():
    rng = np.random.default_rng(1)
    counts = Counter(sample_persona(stats(), rng).gender for _ in range(10_000))
    assert abs(counts["male"] / 10_000 - 0.5) <= 0.02


def test_occupation_table_missing_row_is_config_error():
    bad = dict(STATS, occupations_by_employment={"employee": {"clerk": 1.0}})
    with pytest.raises(ConfigError, match="student"):
        PopulationStats.from_dict(bad)


def test_probabilities_must_sum_to_one():
    with pytest.raises(ConfigError):
        PopulationStats.from_dict(dict(STATS, genders={"male": 0.5, "female": 0.4}))


def test_big_five_in_unit_interval():
    p = sample_persona(stats(), np.random.default_rng(0))
    assert set(p.big_five) == {"openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"}
    assert all(0 <= v <= 1 for v in p.big_five.values())


def student(pid="s"):
    return Persona(pid, "18-29", "female", "student", "undergraduate", {k: 0.5 for k in
                   ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")})


def test_one_home_poi_is_home():
    store = PoiStore([Poi("h", "h", "Home", TOKYO), Poi("s1", "s1", "School", offset(TOKYO, 1))])
    p = assign_primary_locations(student(), store, np.random.default_rng(0))
    assert p.home == "h"


def test_unemployed_has_no_anchor():
    store = PoiStore([Poi("h", "h", "Home", TOKYO)])
    p = student()
    p.employment = "retired"
    assert assign_primary_locations(p, store, np.random.default_rng(0)).workplace_or_school is None


def test_school_within_commute_radius():
    store = PoiStore(
        [
            Poi("h", "h", "Home", TOKYO),
            Poi("s1", "1 km", "School", offset(TOKYO, 1)),
            Poi("s5", "5 km", "School", offset(TOKYO, 0, 5)),
            Poi("s50", "50 km", "School", offset(TOKYO, -50)),
        ]
    )
    seen = set()
    for seed in range(200):
        seen.add(assign_primary_locations(student(), store, np.random.default_rng(seed)).workplace_or_school)
    assert seen == {"s1", "s5"}


def test_missing_home_category_names_it():
    store = PoiStore([Poi("s1", "s1", "School", TOKYO)])
    with pytest.raises(ConfigError, match="Home"):
        assign_primary_locations(student(), store, np.random.default_rng(0))


def test_template_meal_entry_and_work(city):
    worker = student("w")
    worker.employment = "employee"
    alist = template_activity_list(worker, city)
    assert alist["meal"] == ["Cafe", "Casual Dining", "Home", "Restaurant"]
    assert alist["work"] == ["Office"]
    assert alist["sleep"] == ["Home"]
    assert "study" not in alist


def test_llm_activity_list_with_anchor_injection(city):
    mock = ScriptedMock([{"meal": ["Cafe", "Cafe"], "leisure": ["Park"]}])
    p = student()
    alist = generate_activity_location_list("llm", p, city, adapter=mock)
    assert alist == {"meal": ["Cafe"], "leisure": ["Park"], "sleep": ["Home"], "study": ["School"]}
    assert "Movie Theater" in mock.prompts[0]


def test_llm_unknown_category_twice_falls_back(city):
    mock = ScriptedMock([{"gambling": ["Casino"]}])
    flags = []
    alist = generate_activity_location_list("llm", student(), city, adapter=mock, flags=flags)
    assert alist == template_activity_list(student(), city)
    assert flags == [LIST_LLM_FALLBACK]
    assert mock.calls == 2


def test_generate_and_round_trip(city, tmp_path):
    personas = generate_personas(stats(), city, 25, seed=3)
    assert [p.id for p in personas][:2] == ["agent-00000", "agent-00001"]
    again = generate_personas(stats(), city, 25, seed=3)
    assert [p.to_json() for p in personas] == [p.to_json() for p in again]
    path = tmp_path / "personas.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        write_personas(personas, fh)
    loaded = read_personas(path)
    assert loaded == personas
    for p in loaded:
        validate_persona(p, city, PersonaConfig())


def test_validate_rejects_dangling_home(city):
    p = generate_personas(stats(), city, 1, seed=0)[0]
    p.home = "missing"
    with pytest.raises(DataError):
        validate_persona(p, city, PersonaConfig())


def test_persona_block_mentions_traits_and_places(city):
    p = generate_personas(stats(), city, 1, seed=0)[0]
    block = persona_block(p, city)
    assert p.id in block and "extraversion" in block and city[p.home].name in block
