"""Command-line entry point: ``adoptsim <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, Scenario, emit_config, parse_config
from .experiment import CITY_REPORT_COLUMNS, run_experiment, write_report
from .geo import CityTableError, place_agents
from .media import MediaSeriesError
from .metrics import CLASS_ORDER, city_composition, critical_mass_time, ensemble_bands
from .netgen import GenerationError, build_network
from .trace import read_trace_csv

log = logging.getLogger("adoptsim")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _overrides(args) -> dict[str, str]:
    ov = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"{item}: --set expects section.key=value")
        ov[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        ov["experiment.seed"] = str(args.seed)
    if getattr(args, "runs", None) is not None:
        ov["experiment.n_runs"] = str(args.runs)
    if getattr(args, "output", None) is not None:
        ov["experiment.output_dir"] = args.output
    return ov


def cmd_validate(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    sys.stdout.write(emit_config(cfg))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    if cfg.scenario is Scenario.COMPONENT_CURVE:
        raise ConfigError("experiment.scenario: use the component-curve subcommand for ComponentCurve")
    out = run_experiment(cfg, jobs=args.jobs)
    print(out)
    return EXIT_OK


def cmd_component_curve(args) -> int:
    ov = _overrides(args)
    ov["experiment.scenario"] = Scenario.COMPONENT_CURVE.value
    cfg = parse_config(args.config, ov)
    out = run_experiment(cfg, jobs=args.jobs)
    print(out)
    return EXIT_OK


def cmd_generate_network(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    cities = cfg.cities()
    pop = place_agents(cities, cfg.seed)
    net = build_network(pop, cities, cfg.netgen)
    net.check()
    out = Path(args.edges)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save_edgelist(out, {"root_seed": cfg.seed, "config": emit_config(cfg)})
    print(out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    did = False
    if args.traces:
        files = sorted(Path(args.traces).glob("*.csv"))
        if len(files) < 2:
            raise ConfigError(f"{args.traces}: need at least two trace CSVs for bands")
        cum = np.vstack([read_trace_csv(f)["cumulative"] for f in files])
        ensemble_bands(cum).write_csv(out / "bands.csv")
        did = True
    if args.adoptions:
        city_of, weeks = _read_adoptions(args.adoptions)
        comp = city_composition(city_of, weeks)
        rows = []
        for cid, shares in comp.items():
            w = np.sort(weeks[city_of == cid])
            first = int(w[0])
            cum = np.searchsorted(w, np.arange(first, int(w[-1]) + 1), side="right")
            row = {"city_id": cid, "cm_week": critical_mass_time(cum, len(w), start_week=first)}
            for cls in CLASS_ORDER:
                row[f"frac_{cls.value}"] = "" if shares is None else shares[cls]
            rows.append(row)
        write_report(out / "cities_report.csv", rows, CITY_REPORT_COLUMNS)
        did = True
    if not did:
        raise ConfigError("analyze: give --traces and/or --adoptions")
    print(out)
    return EXIT_OK


def _read_adoptions(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["city_id", "adoption_week"]:
            raise ConfigError(f"{path}: expected header city_id,adoption_week")
        rows = [(int(r["city_id"]), int(r["adoption_week"])) for r in reader]
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two adoptions")
    arr = np.array(rows, dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adoptsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, runs=False):
        sp.add_argument("config", help="experiment config (INI)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        sp.add_argument("--seed", type=int, help="root seed")
        sp.add_argument("--output", help="output directory")
        if runs:
            sp.add_argument("--runs", type=int, help="number of replications")
            sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
        return sp

    with_config(sub.add_parser("validate-config", help="resolve and print a config")).set_defaults(fn=cmd_validate)
    with_config(sub.add_parser("simulate", help="run a simulation scenario"), runs=True).set_defaults(fn=cmd_simulate)
    with_config(
        sub.add_parser("component-curve", help="giant component vs homophily sweep"), runs=True
    ).set_defaults(fn=cmd_component_curve)
    gn = with_config(sub.add_parser("generate-network", help="write one network as an edge list"))
    gn.add_argument("--edges", required=True, help="edge list CSV path")
    gn.set_defaults(fn=cmd_generate_network)

    an = sub.add_parser("analyze", help="bands and city reports from existing data")
    an.add_argument("--traces", help="directory of global trace CSVs")
    an.add_argument("--adoptions", help="CSV with city_id,adoption_week per adopter")
    an.add_argument("--output", default=".", help="report directory")
    an.set_defaults(fn=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, CityTableError, MediaSeriesError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (GenerationError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
