"""Simulation config: YAML (or JSON) file -> validated SimConfig.

Relative paths are resolved against the config file's directory. A run
manifest can be used as a config file; its embedded ``config`` block is read.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from mobsim.activity import ENGINES
from mobsim.destination import DestinationConfig
from mobsim.errors import ConfigError
from mobsim.frequency import FrequencyConfig
from mobsim.memory import MemoryParams
from mobsim.persona import PersonaConfig
from mobsim.spatial import DeterrenceMode, ImpedanceParams

DEFAULTS: Dict[str, Any] = {
    "simulation": {"seed": 0, "agents": 10, "days": 1, "day_start_minutes": 0, "workers": 1},
    "paths": {"pois": None, "checkins": None, "personas": None, "stats": None, "out": "out"},
    "pois": {"attraction_from_checkins": False},
    "activity": {"engine": "template"},
    "destination": {"strategy": "physical", "radius_km": 3.0, "radius_by_category": {}},
    "impedance": {"r0_km": 1.5, "beta": 1.75, "k_km": 400.0, "mode": "multiply"},
    "frequency": {"epsilon": 0.01, "sigma": 0.1, "psi": "identity"},
    "memory": {},
    "persona": {},
    "llm": {},
}

PATH_KEYS = ("pois", "checkins", "personas", "stats", "out")


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k not in ("radius_by_category",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class SimConfig:
    raw: Dict[str, Any]
    seed: int
    agents: int
    days: int
    day_start_minutes: int
    workers: int
    paths: Dict[str, Optional[str]]
    engine: str
    destination: DestinationConfig
    memory: MemoryParams
    persona: PersonaConfig
    llm: Dict[str, Any] = field(default_factory=dict)
    attraction_from_checkins: bool = False

    @property
    def uses_llm(self) -> bool:
        return self.engine == "llm" or self.destination.strategy == "llm"

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Optional[os.PathLike] = None) -> "SimConfig":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        raw = _merge(DEFAULTS, data)
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        for k in PATH_KEYS:
            v = raw["paths"].get(k)
            if v is not None:
                raw["paths"][k] = str((base / v).resolve()) if not os.path.isabs(v) else v
        sim = raw["simulation"]
        try:
            seed = int(sim["seed"])
            agents = int(sim["agents"])
            days = int(sim["days"])
            day_start = int(sim["day_start_minutes"])
            workers = int(sim["workers"])
            if agents < 1:
                raise ConfigError("simulation.agents must be >= 1")
            if days < 1:
                raise ConfigError("simulation.days must be >= 1")
            if not 0 <= day_start < 1440:
                raise ConfigError("simulation.day_start_minutes must be in [0, 1440)")
            if workers < 1:
                raise ConfigError("simulation.workers must be >= 1")
            engine = raw["activity"]["engine"]
            if engine not in ENGINES:
                raise ConfigError(f"activity.engine must be one of {ENGINES}")
            imp = raw["impedance"]
            dest = raw["destination"]
            destination = DestinationConfig(
                strategy=dest["strategy"],
                radius_km=float(dest["radius_km"]),
                radius_by_category={str(k): float(v) for k, v in (dest.get("radius_by_category") or {}).items()},
                max_doublings=int(dest.get("max_doublings", 6)),
                llm_max_candidates=int(dest.get("llm_max_candidates", 30)),
                impedance=ImpedanceParams.from_config(imp),
                mode=DeterrenceMode(str(imp.get("mode", "multiply")).lower()),
                frequency=FrequencyConfig(
                    epsilon=float(raw["frequency"]["epsilon"]),
                    sigma=float(raw["frequency"]["sigma"]),
                    psi=str(raw["frequency"]["psi"]),
                ),
            )
            memory = MemoryParams.from_config(raw["memory"])
            persona = PersonaConfig.from_config(raw["persona"])
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if raw["paths"]["pois"] is None:
            raise ConfigError("paths.pois is required")
        if raw["paths"]["personas"] is None and raw["paths"]["stats"] is None:
            raise ConfigError("one of paths.personas or paths.stats is required")
        for k in ("pois", "checkins", "personas", "stats"):
            p = raw["paths"][k]
            if p is not None and not os.path.isfile(p):
                raise ConfigError(f"paths.{k}: file not found: {p}")
        if (engine == "llm" or destination.strategy == "llm") and raw["llm"].get("mock_script") is None:
            if not raw["llm"].get("endpoint_url"):
                raise ConfigError("llm.endpoint_url (or llm.mock_script) is required for llm engines")
        return cls(
            raw=raw,
            seed=seed,
            agents=agents,
            days=days,
            day_start_minutes=day_start,
            workers=workers,
            paths=raw["paths"],
            engine=engine,
            destination=destination,
            memory=memory,
            persona=persona,
            llm=dict(raw["llm"]),
            attraction_from_checkins=bool(raw["pois"].get("attraction_from_checkins", False)),
        )


def load_config(path, overrides: Optional[Mapping] = None) -> SimConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: expected a mapping at top level")
    if data.get("kind") == "mobsim-run-manifest":
        data = data["config"]
    if overrides:
        data = _merge(dict(data), overrides)
    return SimConfig.from_dict(data, base_dir=path.parent)
