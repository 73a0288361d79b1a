"""Run configuration: a YAML document with ``data``, ``grid``, ``engine`` sections.

Schema (paths are resolved relative to the config file)::

    seed: 0                      # required; there is no random default
    output: results              # output directory
    jobs: null                   # worker processes; null = available cores
    data:
      prices: prices.csv         # date,<ticker>,...
      esg: esg.csv               # year,<ticker>,...
      weights: weights.csv       # ticker,weight
    grid:
      modes: [standard, black_litterman]
      lambdas: [0.0, 0.25, 0.5, 0.7]
      alphas: [0.0, 0.1, ..., 1.0]
      betas: [0.95, 0.99]
      rhos_standard: [0.0005]
      rhos_bl: [0.0005, 0.001, 0.0015, 0.002, 0.003, 0.004]
      extra: []                  # explicit strategies, may set n_scenarios
    engine:                      # any EngineSettings field except seed
      window: 1007
      n_scenarios: 10000
      ...

Omitted grid lists fall back to the published grid, which resolves to 616
strategies.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backtest import (MODES, PAPER_ALPHAS, PAPER_BETAS, PAPER_LAMBDAS, PAPER_RHOS_BL,
                       PAPER_RHOS_STANDARD, EngineSettings, StrategyConfig, paper_grid)
from .market_data import ConfigurationError

_ENGINE_FIELDS = {f.name for f in dataclasses.fields(EngineSettings)} - {"seed"}
_GRID_DEFAULTS = {
    "modes": list(MODES),
    "lambdas": list(PAPER_LAMBDAS),
    "alphas": list(PAPER_ALPHAS),
    "betas": list(PAPER_BETAS),
    "rhos_standard": list(PAPER_RHOS_STANDARD),
    "rhos_bl": list(PAPER_RHOS_BL),
}
# (low, high, closed-high) ranges for the grid lists
_GRID_RANGES = {
    "lambdas": (0.0, 1.0),
    "alphas": (0.0, 1.0),
    "betas": (0.5, 1.0),
}


class ConfigError(ConfigurationError):
    """Every problem found in a config, each prefixed by its key path."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    seed: int
    prices: Path
    esg: Path
    weights: Path
    output: Path
    jobs: int
    grid: dict
    engine: dict
    extra: tuple = ()
    source: Path | None = field(default=None, compare=False)

    def settings(self, seed: int | None = None) -> EngineSettings:
        engine = dict(self.engine)
        if "views" in engine:
            engine["views"] = tuple(engine["views"])
        return EngineSettings(seed=self.seed if seed is None else seed, **engine)

    def strategies(self) -> list[StrategyConfig]:
        g = self.grid
        configs = paper_grid(g["lambdas"], g["alphas"], g["betas"], g["rhos_standard"],
                             g["rhos_bl"], g["modes"])
        configs += [StrategyConfig(**row) for row in self.extra]
        seen, out = set(), []
        for c in configs:
            if c.id not in seen:
                seen.add(c.id)
                out.append(c)
        return out

    def echo(self) -> dict:
        """Resolved configuration as plain data, for the run manifest."""
        return {
            "seed": self.seed,
            "data": {"prices": str(self.prices), "esg": str(self.esg), "weights": str(self.weights)},
            "output": str(self.output),
            "grid": {k: list(v) for k, v in self.grid.items()},
            "extra": [dict(r) for r in self.extra],
            "engine": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.engine.items()},
        }


def _number_list(problems, path, value, low=None, high=None, open_high=False):
    if not isinstance(value, (list, tuple)):
        problems.append(f"{path}: expected a list, got {type(value).__name__}")
        return []
    out = []
    for n, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            problems.append(f"{path}[{n}]: expected a number, got {v!r}")
            continue
        v = float(v)
        if low is not None and v < low:
            problems.append(f"{path}[{n}]: {v} is below {low}")
        elif high is not None and (v > high or (open_high and v >= high)):
            problems.append(f"{path}[{n}]: {v} is outside [{low}, {high}{')' if open_high else ']'}")
        else:
            out.append(v)
    return out


def parse(doc: dict, base: Path | None = None) -> RunConfig:
    """Validate a config mapping; raise :class:`ConfigError` listing every problem."""
    problems: list[str] = []
    base = Path(".") if base is None else base
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: expected a mapping"])
    unknown = set(doc) - {"seed", "output", "jobs", "data", "grid", "engine"}
    problems += [f"{k}: unknown key" for k in sorted(unknown)]

    seed = doc.get("seed")
    if seed is None:
        problems.append("seed: required (no nondeterministic default)")
    elif isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append(f"seed: expected a nonnegative integer, got {seed!r}")

    jobs = doc.get("jobs")
    if jobs is None:
        jobs = os.cpu_count() or 1
    elif isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
        problems.append(f"jobs: expected a positive integer, got {jobs!r}")
        jobs = 1

    data = doc.get("data") or {}
    paths = {}
    for key in ("prices", "esg", "weights"):
        if key not in data:
            problems.append(f"data.{key}: required")
            continue
        p = Path(data[key])
        paths[key] = p if p.is_absolute() else base / p
    problems += [f"data.{k}: unknown key" for k in sorted(set(data) - {"prices", "esg", "weights"})]
    output = Path(doc.get("output", "results"))
    output = output if output.is_absolute() else base / output

    raw_grid = doc.get("grid") or {}
    problems += [f"grid.{k}: unknown key" for k in sorted(set(raw_grid) - set(_GRID_DEFAULTS) - {"extra"})]
    grid = {}
    for key, default in _GRID_DEFAULTS.items():
        value = raw_grid.get(key, default)
        if key == "modes":
            if not isinstance(value, (list, tuple)):
                problems.append(f"grid.modes: expected a list, got {type(value).__name__}")
                value = []
            bad = [m for m in value if m not in MODES]
            problems += [f"grid.modes: unknown mode {m!r} (choose from {list(MODES)})" for m in bad]
            grid[key] = [m for m in value if m in MODES]
        elif key.startswith("rhos"):
            grid[key] = _number_list(problems, f"grid.{key}", value, low=0.0)
        else:
            low, high = _GRID_RANGES[key]
            grid[key] = _number_list(problems, f"grid.{key}", value, low, high, open_high=key == "betas")
        if key == "betas":
            problems += [f"grid.betas: {b} must exceed 0.5" for b in grid[key] if b <= 0.5]

    extra = []
    for n, row in enumerate(raw_grid.get("extra") or []):
        try:
            extra.append(StrategyConfig(**row).to_dict())
        except (TypeError, ConfigurationError) as exc:
            problems.append(f"grid.extra[{n}]: {exc}")

    engine = dict(doc.get("engine") or {})
    for k in sorted(set(engine) - _ENGINE_FIELDS):
        problems.append(f"engine.{k}: unknown key" + (" (set seed at top level)" if k == "seed" else ""))
        engine.pop(k)
    if "views" in engine:
        engine["views"] = tuple(engine["views"] or ())

    config = RunConfig(seed if isinstance(seed, int) else 0, paths.get("prices", Path()),
                       paths.get("esg", Path()), paths.get("weights", Path()), output, jobs,
                       grid, engine, tuple(extra))
    if not problems:
        try:
            settings = config.settings()
        except (TypeError, ConfigurationError) as exc:
            problems.append(f"engine: {exc}")
        else:
            if settings.n_scenarios < 100:
                problems.append(f"engine.n_scenarios: {settings.n_scenarios} is below 100")
            if not settings.tau > 0 or not settings.risk_aversion > 0:
                problems.append("engine: tau and risk_aversion must be positive")
        if not problems and not config.strategies():
            problems.append("grid: resolves to an empty strategy grid")
    if problems:
        raise ConfigError(problems)
    return config


def load(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: config file not found"])
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    config = parse(doc, path.parent)
    return dataclasses.replace(config, source=path)
