from __future__ import annotations

import configparser
import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Any

from mvreinsure.exceptions import ConfigError
from mvreinsure.montecarlo import SimConfig, ValidationTolerances
from mvreinsure.utils import strtobool

if TYPE_CHECKING:
    import argparse

SETTINGS_FILE = ".mvreinsure"

DEFAULT_SETTINGS: dict[str, Any] = {
    "GENERAL": {
        "output": "out",
        "template": "txt",
        "grid_steps": 2000,
        "tail_tolerance": 1e-8,
        "grid_tolerance": 1e-6,
        "paths": 100_000,
        "seed": 42,
        "dt_max": 0.01,
        "chunk_size": 10_000,
        "mode": "explicit-product",
        "raise_exceptions": False,
    },
    "tolerances": {
        "sigmas": 3.0,
        "variance_rel": 0.05,
        "value_rel": 0.05,
        "sign_explicit": 1e-12,
        "absolute": 1e-10,
        "probes": "0.8:1.0,1.0:1.2",
    },
}


def _coerce(value: Any, default: Any) -> Any:
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        return strtobool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def parse_probes(value: str | Any) -> tuple[tuple[float, float], ...]:
    """'0.8:1.0,1.0:1.2' -> ((0.8, 1.0), (1.0, 1.2)) as (pi scale, q scale) pairs."""
    if not isinstance(value, str):
        return tuple((float(p), float(q)) for p, q in value)
    probes = []
    for item in filter(None, (part.strip() for part in value.split(","))):
        pi_scale, _, q_scale = item.partition(":")
        probes.append((float(pi_scale), float(q_scale or 1.0)))
    return tuple(probes)


@dataclass(frozen=True)
class Settings:
    # output directory for csv/json artifacts
    output: str = DEFAULT_SETTINGS["GENERAL"]["output"]

    # 'markdown', 'txt', 'json' or template filename
    template: str = DEFAULT_SETTINGS["GENERAL"]["template"]

    # Riccati time grid
    grid_steps: int = DEFAULT_SETTINGS["GENERAL"]["grid_steps"]

    # Poisson tail mass that fixes the default claim-count cap
    tail_tolerance: float = DEFAULT_SETTINGS["GENERAL"]["tail_tolerance"]

    # relative change of P_i(0) on the halved grid that triggers a warning
    grid_tolerance: float = DEFAULT_SETTINGS["GENERAL"]["grid_tolerance"]

    # Monte Carlo
    paths: int = DEFAULT_SETTINGS["GENERAL"]["paths"]
    seed: int = DEFAULT_SETTINGS["GENERAL"]["seed"]
    dt_max: float = DEFAULT_SETTINGS["GENERAL"]["dt_max"]
    chunk_size: int = DEFAULT_SETTINGS["GENERAL"]["chunk_size"]
    mode: str = DEFAULT_SETTINGS["GENERAL"]["mode"]

    # raise exceptions on command's errors
    raise_exceptions: bool = DEFAULT_SETTINGS["GENERAL"]["raise_exceptions"]

    # statistical acceptance of `validate`
    tolerances: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_SETTINGS["tolerances"]))

    @classmethod
    def from_dict(cls, d: dict[str, Any], *, strict: bool = True) -> Settings:
        """
        Create settings from dictionary.

        In strict mode unknown keys or sections raise `ConfigError`, otherwise they are
        skipped. String values (as read from ini files) are coerced to the type of the
        built-in default.
        """
        config: dict[str, Any] = {}
        for section, conf in d.items():
            if section == "GENERAL":
                for key, value in conf.items():
                    if key not in DEFAULT_SETTINGS["GENERAL"]:
                        if strict:
                            msg = f"Unknown setting {key}"
                            raise ConfigError(msg)
                        continue
                    try:
                        config[key] = _coerce(value, DEFAULT_SETTINGS["GENERAL"][key])
                    except ValueError as exc:
                        msg = f"Invalid value for setting {key}: {value!r}"
                        raise ConfigError(msg) from exc
            elif section == "tolerances":
                tolerances = dict(DEFAULT_SETTINGS["tolerances"])
                for key, value in conf.items():
                    if key not in tolerances:
                        if strict:
                            msg = f"Unknown tolerance {key}"
                            raise ConfigError(msg)
                        continue
                    tolerances[key] = _coerce(value, tolerances[key])
                config["tolerances"] = tolerances
            elif strict:
                msg = f"Unknown setting {section}"
                raise ConfigError(msg)
        return Settings(**config)

    def as_dict(self) -> dict[str, Any]:
        return {
            "GENERAL": {key: getattr(self, key) for key in DEFAULT_SETTINGS["GENERAL"]},
            "tolerances": dict(self.tolerances),
        }

    def validation_tolerances(self) -> ValidationTolerances:
        tol = self.tolerances
        return ValidationTolerances(
            sigmas=float(tol["sigmas"]),
            variance_rel=float(tol["variance_rel"]),
            value_rel=float(tol["value_rel"]),
            sign_explicit=float(tol["sign_explicit"]),
            absolute=float(tol["absolute"]),
            probes=parse_probes(tol["probes"]),
        )


def generate_config() -> configparser.ConfigParser:
    config = configparser.ConfigParser()
    for section, values in DEFAULT_SETTINGS.items():
        config.add_section(section)
        for key, value in values.items():
            config.set(section, key, str(value))
    return config


def read_ini_settings(path: str | Path) -> dict[str, Any]:
    settings: dict[str, Any] = {}
    config = configparser.ConfigParser()
    config.read(Path(path))
    for section_name in DEFAULT_SETTINGS:
        if section_name in config:
            section = config[section_name]
            settings[section_name] = {k: v for k, v in section.items() if k in DEFAULT_SETTINGS[section_name]}
    return settings


@lru_cache(maxsize=128)
def get_settings() -> Settings:
    conf = copy.deepcopy(DEFAULT_SETTINGS)
    for section, values in read_ini_settings(SETTINGS_FILE).items():
        conf[section].update(values)
    return Settings.from_dict(conf)


@dataclass(frozen=True)
class GridSpec:
    steps: int = DEFAULT_SETTINGS["GENERAL"]["grid_steps"]
    nmax: int | None = None
    tail_tolerance: float = DEFAULT_SETTINGS["GENERAL"]["tail_tolerance"]

    def __post_init__(self) -> None:
        if self.nmax is not None and self.nmax < 0:
            msg = f"nmax must be nonnegative, got {self.nmax}"
            raise ConfigError(msg)


@dataclass(frozen=True)
class FrontierSpec:
    x: float = 1.0
    targets: tuple[float, ...] = ()


@dataclass(frozen=True)
class StrategySpec:
    """Strategy for `simulate`: a registered name plus the fixed controls used by `fixed`."""

    name: str = "feedback"
    z: float | None = None
    pi: tuple[float, ...] = ()
    q: float = 0.0


def _section(d: dict[str, Any], name: str, cls: type) -> dict[str, Any]:
    raw = d.get(name) or {}
    if not isinstance(raw, dict):
        msg = f"'{name}' must be an object"
        raise ConfigError(msg)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        msg = f"unknown keys in '{name}': {', '.join(unknown)}"
        raise ConfigError(msg)
    return raw


@dataclass(frozen=True)
class RunConfig:
    model: dict[str, Any]
    grid: GridSpec = field(default_factory=GridSpec)
    frontier: FrontierSpec = field(default_factory=FrontierSpec)
    simulation: SimConfig = field(default_factory=SimConfig)
    strategy: StrategySpec = field(default_factory=StrategySpec)
    output: str = DEFAULT_SETTINGS["GENERAL"]["output"]

    @classmethod
    def from_dict(cls, d: dict[str, Any], settings: Settings | None = None) -> RunConfig:
        """
        Build a run configuration; keys missing from `d` fall back to `settings`.

        Raises:
            ConfigError: unknown keys, missing model or malformed values
        """
        settings = settings or Settings()
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            msg = f"unknown run configuration keys: {', '.join(unknown)}"
            raise ConfigError(msg)
        if not isinstance(d.get("model"), dict):
            msg = "run configuration needs a 'model' object"
            raise ConfigError(msg)
        try:
            grid_raw = _section(d, "grid", GridSpec)
            grid = GridSpec(
                steps=int(grid_raw.get("steps", settings.grid_steps)),
                nmax=None if grid_raw.get("nmax") is None else int(grid_raw["nmax"]),
                tail_tolerance=float(grid_raw.get("tail_tolerance", settings.tail_tolerance)),
            )
            frontier_raw = _section(d, "frontier", FrontierSpec)
            frontier = FrontierSpec(
                x=float(frontier_raw.get("x", 1.0)),
                targets=tuple(float(z) for z in frontier_raw.get("targets", ())),
            )
            sim_raw = _section(d, "simulation", SimConfig)
            simulation = SimConfig(
                n_paths=int(sim_raw.get("n_paths", settings.paths)),
                seed=int(sim_raw.get("seed", settings.seed)),
                dt_max=float(sim_raw.get("dt_max", settings.dt_max)),
                mode=sim_raw.get("mode", settings.mode),
                record_paths=bool(sim_raw.get("record_paths", False)),
                chunk_size=int(sim_raw.get("chunk_size", settings.chunk_size)),
                x=frontier.x,
            )
            strategy_raw = _section(d, "strategy", StrategySpec)
            strategy = StrategySpec(
                name=str(strategy_raw.get("name", "feedback")),
                z=None if strategy_raw.get("z") is None else float(strategy_raw["z"]),
                pi=tuple(float(p) for p in strategy_raw.get("pi", ())),
                q=float(strategy_raw.get("q", 0.0)),
            )
        except (TypeError, ValueError) as exc:
            msg = f"malformed run configuration: {exc}"
            raise ConfigError(msg) from exc
        return cls(
            model=d["model"],
            grid=grid,
            frontier=frontier,
            simulation=simulation,
            strategy=strategy,
            output=str(d.get("output", settings.output)),
        )

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["model"] = copy.deepcopy(self.model)
        return data

    def apply_args(self, args: argparse.Namespace) -> RunConfig:
        """Command-line overrides: `--out`, `--seed`, `--paths`, `--grid-steps`, `--nmax`."""
        config = self
        if getattr(args, "out", None) is not None:
            config = replace(config, output=args.out)
        sim_changes = {}
        if getattr(args, "seed", None) is not None:
            sim_changes["seed"] = args.seed
        if getattr(args, "paths", None) is not None:
            sim_changes["n_paths"] = args.paths
        if sim_changes:
            config = replace(config, simulation=replace(config.simulation, **sim_changes))
        grid_changes = {}
        if getattr(args, "grid_steps", None) is not None:
            grid_changes["steps"] = args.grid_steps
        if getattr(args, "nmax", None) is not None:
            grid_changes["nmax"] = args.nmax
        if grid_changes:
            config = replace(config, grid=replace(config.grid, **grid_changes))
        return config

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def load_run_config(path: str | Path, settings: Settings | None = None) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        msg = f"run configuration {path} not found"
        raise ConfigError(msg) from exc
    except json.JSONDecodeError as exc:
        msg = f"run configuration {path} is not valid JSON: {exc}"
        raise ConfigError(msg) from exc
    if not isinstance(data, dict):
        msg = f"run configuration {path} must hold a JSON object"
        raise ConfigError(msg)
    return RunConfig.from_dict(data, settings)
