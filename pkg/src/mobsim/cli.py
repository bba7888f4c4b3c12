"""Command line entry point: gen-personas, simulate, export-geojson, metrics.

Exit codes: 0 success, 2 config error, 3 data error, 4 partial run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from mobsim.errors import CategoryError, ConfigError, DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PARTIAL = 4

logger = logging.getLogger("mobsim")


def _read_yaml(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return data


def cmd_gen_personas(args) -> int:
    from mobsim.llm import make_adapter
    from mobsim.persona import PersonaConfig, generate_personas, load_stats, write_personas
    from mobsim.poi_store import load_pois

    cfg = _read_yaml(args.config) if args.config else {}
    pconfig = PersonaConfig.from_config(cfg.get("persona", {}))
    stats = load_stats(args.stats)
    store = load_pois(args.pois)
    factory = None
    if args.llm:
        llm_cfg = cfg.get("llm", {})
        if llm_cfg.get("mock_script") is None and not llm_cfg.get("endpoint_url"):
            raise ConfigError("--llm needs an llm section (endpoint_url or mock_script) in --config")
        factory = lambda: make_adapter(llm_cfg)  # noqa: E731
    personas = generate_personas(
        stats, store, args.count, args.seed, pconfig, engine="llm" if args.llm else "template", adapter_factory=factory
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_personas(personas, fh)
    print(f"wrote {len(personas)} personas to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from mobsim.config import load_config
    from mobsim.runner import run_simulation

    overrides: dict = {}
    sim = {}
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.agents is not None:
        sim["agents"] = args.agents
    if args.days is not None:
        sim["days"] = args.days
    if args.workers is not None:
        sim["workers"] = args.workers
    if sim:
        overrides["simulation"] = sim
    if args.out is not None:
        overrides["paths"] = {"out": os.path.abspath(args.out)}
    config = load_config(args.config, overrides)
    result = run_simulation(config)
    print(f"wrote {result.records} records to {result.trace_path}")
    if result.partial:
        print(f"{len(result.failures)} agent-day(s) failed; see failures.jsonl", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_export_geojson(args) -> int:
    from mobsim.metrics import export_geojson

    fc = export_geojson(args.trace, args.out)
    print(f"wrote {len(fc['features'])} features to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from mobsim.metrics import compute_metrics
    from mobsim.poi_store import load_checkins, load_pois

    reference = store = None
    if args.reference:
        if not args.pois:
            raise ConfigError("--reference needs --pois to locate check-in venues")
        reference = load_checkins(args.reference)
        store = load_pois(args.pois)
    report = compute_metrics(args.trace, reference, store)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote metrics for {report.visits} visits to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-personas", help="sample personas into a JSONL file")
    p.add_argument("--stats", required=True, help="population statistics (YAML/JSON)")
    p.add_argument("--pois", required=True, help="POI CSV")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--llm", action="store_true", help="generate activity-location lists with the model")
    p.add_argument("--config", help="config file supplying persona.* and llm.* keys")
    p.set_defaults(func=cmd_gen_personas)

    p = sub.add_parser("simulate", help="run the simulation described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-geojson", help="convert a trace to a GeoJSON FeatureCollection")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_geojson)

    p = sub.add_parser("metrics", help="jump lengths, radius of gyration, category counts")
    p.add_argument("--trace", required=True)
    p.add_argument("--reference", help="check-in CSV to compare jump lengths against")
    p.add_argument("--pois", help="POI CSV (required with --reference)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CategoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
