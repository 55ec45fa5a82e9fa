"""Scenario orchestration: build inputs, run, write data files and a manifest."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, Scenario, emit_config
from .dynamics import NetworkRecipe, run_replications
from .geo import place_agents
from .media import load_media_series
from .metrics import CLASS_ORDER, city_critical_mass_weeks, ensemble_bands, trace_composition
from .netgen import build_network, component_curve, giant_threshold
from .trace import ReplicationEnsemble

log = logging.getLogger(__name__)

CITY_REPORT_COLUMNS = (
    "city_id", "cm_week", "frac_early_adopter", "frac_early_majority", "frac_late_majority", "frac_laggard",
)


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_city_report(path: str | Path, ens: ReplicationEnsemble) -> None:
    """Median critical-mass week and mean class shares per city over runs."""
    ids = ens.traces[0].city_ids
    cm = np.vstack([city_critical_mass_weeks(t) for t in ens.traces])
    comps = [trace_composition(t) for t in ens.traces]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CITY_REPORT_COLUMNS)
        for row, cid in enumerate(ids):
            col = cm[:, row]
            col = col[~np.isnan(col)]
            cm_week = repr(float(np.median(col))) if col.size else ""
            present = [c[int(cid)] for c in comps if c[int(cid)] is not None]
            if present:
                shares = [repr(float(np.mean([p[k] for p in present]))) for k in CLASS_ORDER]
            else:
                shares = [""] * len(CLASS_ORDER)
            w.writerow([int(cid), cm_week, *shares])


def write_report(path: str | Path, rows: list[dict], columns) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _run_simulation(cfg: ExperimentConfig, out: Path, manifest: dict, jobs: int) -> None:
    cities = cfg.cities()
    cities.to_csv(out / "cities.csv")
    media = load_media_series(cfg.media_path) if cfg.media_path else None
    if media is not None and cfg.sim.media_mode.value != "exogenous":
        media = None
    recipe = NetworkRecipe(cities, cfg.netgen)
    if cfg.fresh_network_per_run:
        source = recipe
    else:
        pop = place_agents(cities, cfg.seed)
        source = build_network(pop, cities, cfg.netgen)
        source.check()
        manifest["network"] = {"n": source.n, "n_edges": source.n_edges, "diagnostics": source.diagnostics}
    ens = run_replications(source, cfg.sim, cfg.n_runs, media_input=media, jobs=jobs)
    manifest["runs"] = {"requested": cfg.n_runs, "completed": len(ens), "failed": ens.failure_count}
    manifest["failures"] = ens.failures
    manifest["run_seeds"] = [cfg.sim.rng_seed + i for i in range(cfg.n_runs)]
    if not ens.traces:
        raise RuntimeError("every replication failed")

    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    for tr in ens.traces:
        tr.write_csv(trace_dir / f"run_{tr.seed - cfg.sim.rng_seed:04d}.csv")
    ens.traces[0].write_csv(out / "trace_global.csv", out / "trace_city.csv")
    if len(ens) >= 2:
        ensemble_bands(ens).write_csv(out / "bands.csv")
    write_city_report(out / "cities_report.csv", ens)


def _run_component_curve(cfg: ExperimentConfig, out: Path, manifest: dict, jobs: int) -> None:
    cities = cfg.cities()
    cities.to_csv(out / "cities.csv")
    rows = component_curve(cities, cfg.netgen, cfg.h_grid, cfg.n_networks, jobs=jobs)
    write_report(
        out / "component_curve.csv",
        [
            {
                "h": r.h, "geo_biased": str(r.geo_biased).lower(), "mean_gc": r.mean_gc, "se_gc": r.se_gc,
                "mean_homophily": r.mean_homophily, "n_ok": r.n_ok, "n_failed": r.n_failed,
            }
            for r in rows
        ],
        ("h", "geo_biased", "mean_gc", "se_gc", "mean_homophily", "n_ok", "n_failed"),
    )
    manifest["giant_threshold"] = {
        "geo_biased": giant_threshold(rows, True),
        "unbiased": giant_threshold(rows, False),
    }
    manifest["failures"] = [e for r in rows for e in r.errors]
    manifest["network_seeds"] = [cfg.netgen.rng_seed + i for i in range(cfg.n_networks)]


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    """Run ``cfg`` and write every artifact under ``cfg.output_dir``.

    Data files depend only on the config; the manifest also records wall
    clock timestamps.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    (out / "config.resolved.ini").write_text(emit_config(cfg), encoding="utf-8")
    inputs = {}
    for p in (cfg.cities_path, cfg.media_path):
        if p:
            inputs[str(p)] = sha256_of(p)
    manifest: dict = {
        "scenario": cfg.scenario.value,
        "version": __version__,
        "root_seed": cfg.seed,
        "inputs": inputs,
        "config": emit_config(cfg),
        "started": started,
    }
    if cfg.scenario is Scenario.COMPONENT_CURVE:
        _run_component_curve(cfg, out, manifest, jobs)
    else:
        _run_simulation(cfg, out, manifest, jobs)
    manifest["cities_table_sha256"] = sha256_of(out / "cities.csv")
    manifest["finished"] = dt.datetime.now(dt.timezone.utc).isoformat()
    manifest["outputs"] = sorted(
        str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"
    )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable), encoding="utf-8")
    return out


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)}")
