"""INI-style experiment configuration.

Every section maps onto one parameter object; keys not listed in
``SCHEMA`` are rejected. Scenario defaults are applied before user values,
then scenario constraints are checked.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable

from .dynamics import SeedSpec, SimParams
from .geo import CityTable, hub_cities, load_cities, log_gradient, uniform_cities
from .media import MediaMode, MediaParams
from .netgen import NetGenParams

OUTPUT_ENV = "ADOPTSIM_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


class Scenario(str, Enum):
    CLASSIC_SI = "ClassicSI"
    GEO_HOMOPHILY = "GeoHomophily"
    EXOGENOUS_MEDIA = "ExogenousMedia"
    ENDOGENOUS_MEDIA = "EndogenousMedia"
    COMPONENT_CURVE = "ComponentCurve"


@dataclass(frozen=True)
class GeographySpec:
    """Where the city table comes from when no cities_path is given."""

    kind: str = "uniform"  # uniform | gradient | hub
    n_cities: int = 408
    agents_per_city: int = 1000
    frac_early: float = 0.0
    frac_early_min: float = 0.02
    frac_early_max: float = 0.30
    n_hubs: int = 15
    hub_frac: float = 0.6
    layout_seed: int = 0

    def build(self) -> CityTable:
        if self.kind == "uniform":
            return uniform_cities(self.n_cities, self.agents_per_city, self.frac_early, seed=self.layout_seed)
        if self.kind == "gradient":
            # richest city first, so the default origin seed lands there
            fe = log_gradient(self.n_cities, self.frac_early_max, self.frac_early_min)
            return uniform_cities(self.n_cities, self.agents_per_city, fe, seed=self.layout_seed)
        if self.kind == "hub":
            return hub_cities(
                self.n_cities, self.agents_per_city, self.n_hubs, self.hub_frac,
                self.frac_early, seed=self.layout_seed,
            )
        raise ConfigError(f"geography.kind: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    netgen: NetGenParams
    sim: SimParams
    geography: GeographySpec = GeographySpec()
    cities_path: str | None = None
    media_path: str | None = None
    n_runs: int = 100
    output_dir: str = "results"
    seed: int = 0
    fresh_network_per_run: bool = False
    h_grid: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 11))
    n_networks: int = 100

    @property
    def media(self) -> MediaParams:
        return self.sim.media_params

    def cities(self) -> CityTable:
        if self.cities_path:
            return load_cities(self.cities_path)
        try:
            return self.geography.build()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"geography: {exc}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(" ", "").split(",") if x)


def _opt_str(text: str) -> str | None:
    return text.strip() or None


# section -> key -> parser for the raw text value
SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "experiment": {
        "scenario": Scenario,
        "n_runs": int,
        "output_dir": str,
        "seed": int,
        "cities_path": _opt_str,
        "media_path": _opt_str,
        "fresh_network_per_run": _bool,
    },
    "geography": {
        "kind": str,
        "n_cities": int,
        "agents_per_city": int,
        "frac_early": float,
        "frac_early_min": float,
        "frac_early_max": float,
        "n_hubs": int,
        "hub_frac": float,
        "layout_seed": int,
    },
    "network": {
        "mean_degree": float,
        "gamma": float,
        "nu_km": float,
        "homophily_target": float,
        "geo_biased": _bool,
    },
    "dynamics": {
        "beta_r": float,
        "ratio_R": float,
        "horizon_T": int,
        "seed_spec": SeedSpec.parse,
    },
    "media": {
        "mode": MediaMode,
        "alpha": float,
        "shock_scale": float,
        "activation_fraction": float,
        "exponent": float,
    },
    "sweep": {
        "h_grid": _floats,
        "n_networks": int,
    },
}

_MEDIA_TO_SIM = {
    "mode": "media_mode",
    "alpha": "alpha",
    "shock_scale": "shock_scale",
    "activation_fraction": "activation_fraction",
    "exponent": "media_exponent",
}


def scenario_defaults(scenario: Scenario) -> dict[str, dict[str, Any]]:
    """Values a scenario implies before any user setting is applied."""
    if scenario is Scenario.CLASSIC_SI:
        return {
            "network": {"geo_biased": False, "homophily_target": 0.0},
            "dynamics": {"ratio_R": 1.0},
            "media": {"mode": MediaMode.NONE, "alpha": 0.0},
        }
    geo = {"kind": "gradient", "n_cities": 408, "agents_per_city": 1000}
    base = {
        "geography": geo,
        "network": {"geo_biased": True, "homophily_target": 0.6},
        # word of mouth alone converts roughly a quarter of agents by week 180
        "dynamics": {"ratio_R": 3.0, "beta_r": 0.0065, "horizon_T": 180},
    }
    if scenario is Scenario.GEO_HOMOPHILY:
        # fast enough that nearly every city adopts, so each has a clear critical-mass week
        base["dynamics"]["beta_r"] = 0.02
        base["media"] = {"mode": MediaMode.NONE, "alpha": 0.0}
    elif scenario is Scenario.EXOGENOUS_MEDIA:
        base["media"] = {"mode": MediaMode.EXOGENOUS, "alpha": 0.15}
    elif scenario is Scenario.ENDOGENOUS_MEDIA:
        base["media"] = {"mode": MediaMode.ENDOGENOUS, "alpha": 0.15, "shock_scale": 1.0, "activation_fraction": 0.135}
    elif scenario is Scenario.COMPONENT_CURVE:
        base = {
            "geography": {"kind": "hub", "n_cities": 100, "agents_per_city": 100, "frac_early": 0.1},
            "network": {"geo_biased": True},
            "dynamics": {},
            "media": {"mode": MediaMode.NONE},
        }
    return base


def _check_scenario(cfg: ExperimentConfig) -> None:
    s = cfg.scenario
    if s is Scenario.CLASSIC_SI:
        if cfg.sim.ratio_R != 1.0:
            raise ConfigError("dynamics.ratio_R: ClassicSI requires ratio_R = 1")
        if cfg.sim.alpha != 0.0 or cfg.sim.media_mode is not MediaMode.NONE:
            raise ConfigError("media.alpha: ClassicSI requires alpha = 0 and no media")
        if cfg.netgen.geo_biased:
            raise ConfigError("network.geo_biased: ClassicSI requires geo_biased = false")
    if cfg.sim.media_mode is MediaMode.EXOGENOUS and not cfg.media_path:
        raise ConfigError("experiment.media_path: ExogenousMedia requires a media series file")
    if s is Scenario.EXOGENOUS_MEDIA and cfg.sim.media_mode is not MediaMode.EXOGENOUS:
        raise ConfigError("media.mode: ExogenousMedia requires mode = exogenous")
    if s is Scenario.ENDOGENOUS_MEDIA and cfg.sim.media_mode is not MediaMode.ENDOGENOUS:
        raise ConfigError("media.mode: EndogenousMedia requires mode = endogenous")
    if s is Scenario.COMPONENT_CURVE and not cfg.h_grid:
        raise ConfigError("sweep.h_grid: must be non-empty")
    if cfg.n_runs < 1:
        raise ConfigError("experiment.n_runs: must be >= 1")
    if s is Scenario.COMPONENT_CURVE and cfg.n_networks < 1:
        raise ConfigError("sweep.n_networks: must be >= 1")


def _read_values(parser: configparser.ConfigParser) -> dict[str, dict[str, Any]]:
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            try:
                values.setdefault(section, {})[key] = SCHEMA[section][key](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
    return values


def build_config(values: dict[str, dict[str, Any]]) -> ExperimentConfig:
    """Resolve scenario defaults and user values into a validated config."""
    exp = values.get("experiment", {})
    if "scenario" not in exp:
        raise ConfigError("experiment.scenario: missing required key")
    scenario = Scenario(exp["scenario"])
    merged: dict[str, dict[str, Any]] = {s: {} for s in SCHEMA}
    for section, kv in scenario_defaults(scenario).items():
        merged[section].update(kv)
    for section, kv in values.items():
        merged[section].update(kv)

    e = merged["experiment"]
    seed = e.get("seed", 0)
    output_dir = e.get("output_dir") or os.environ.get(OUTPUT_ENV) or "results"
    try:
        geography = GeographySpec(**merged["geography"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"geography: {exc}") from None
    try:
        netgen = NetGenParams(rng_seed=seed, **merged["network"])
    except ValueError as exc:
        raise ConfigError(f"network.{_leading_word(exc)}: {exc}") from None
    sim_kwargs = dict(merged["dynamics"])
    for k, v in merged["media"].items():
        sim_kwargs[_MEDIA_TO_SIM[k]] = v
    try:
        sim = SimParams(rng_seed=seed, **sim_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{_SIM_KEY_PATH.get(_leading_word(exc), 'dynamics')}: {exc}") from None
    cfg = ExperimentConfig(
        scenario=scenario,
        netgen=netgen,
        sim=sim,
        geography=geography,
        cities_path=e.get("cities_path"),
        media_path=e.get("media_path"),
        n_runs=e.get("n_runs", 100),
        output_dir=output_dir,
        seed=seed,
        fresh_network_per_run=e.get("fresh_network_per_run", False),
        **{k: v for k, v in merged["sweep"].items()},
    )
    _check_scenario(cfg)
    return cfg


_SIM_KEY_PATH = {
    "beta_r": "dynamics.beta_r",
    "ratio_R": "dynamics.ratio_R",
    "beta_e": "dynamics.ratio_R",
    "horizon_T": "dynamics.horizon_T",
    "alpha": "media.alpha",
    "shock_scale": "media.shock_scale",
    "activation_fraction": "media.activation_fraction",
    "exponent": "media.exponent",
}


def _leading_word(exc: Exception) -> str:
    return str(exc).split(" ", 1)[0]


def parse_config_text(
    text: str, overrides: dict[str, str] | None = None, base_dir: str | Path | None = None
) -> ExperimentConfig:
    """Parse config text. Relative input paths in the text resolve against
    ``base_dir``; paths given as overrides are used as is."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (ratio_R, horizon_T)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    if base_dir is not None and parser.has_section("experiment"):
        for key in ("cities_path", "media_path"):
            raw = parser.get("experiment", key, fallback="").strip()
            if raw and not Path(raw).is_absolute():
                parser.set("experiment", key, str(Path(base_dir) / raw))
    for path, value in (overrides or {}).items():
        section, _, key = path.partition(".")
        if not key:
            raise ConfigError(f"{path}: override must be section.key")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    return build_config(_read_values(parser))


def parse_config(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read, resolve and validate an experiment config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    return parse_config_text(text, overrides, base_dir=Path(path).parent)


def emit_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; ``parse_config_text(emit_config(c)) == c``."""
    sim, net, geo = cfg.sim, cfg.netgen, cfg.geography
    sections = {
        "experiment": {
            "scenario": cfg.scenario.value,
            "n_runs": cfg.n_runs,
            "output_dir": cfg.output_dir,
            "seed": cfg.seed,
            "cities_path": cfg.cities_path or "",
            "media_path": cfg.media_path or "",
            "fresh_network_per_run": cfg.fresh_network_per_run,
        },
        "geography": {f.name: getattr(geo, f.name) for f in fields(geo)},
        "network": {
            "mean_degree": net.mean_degree,
            "gamma": net.gamma,
            "nu_km": net.nu_km,
            "homophily_target": net.homophily_target,
            "geo_biased": net.geo_biased,
        },
        "dynamics": {
            "beta_r": sim.beta_r,
            "ratio_R": sim.ratio_R,
            "horizon_T": sim.horizon_T,
            "seed_spec": str(sim.seed_spec),
        },
        "media": {
            "mode": sim.media_mode.value,
            "alpha": sim.alpha,
            "shock_scale": sim.shock_scale,
            "activation_fraction": sim.activation_fraction,
            "exponent": sim.media_exponent,
        },
        "sweep": {
            "h_grid": ",".join(repr(h) for h in cfg.h_grid),
            "n_networks": cfg.n_networks,
        },
    }
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, kv in sections.items():
        parser[section] = {k: _fmt(v) for k, v in kv.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
