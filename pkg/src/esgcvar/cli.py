"""Command-line entry point: ``esgcvar {validate,backtest,plot,synth}``.

Exit codes: 0 success, 1 partial failure (some strategies failed), 2
configuration error, 3 data error, 4 every strategy failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import fnmatch
import logging
import sys
import time
from pathlib import Path

import yaml

from . import __version__
from . import config as cfg
from .artifacts import sha256_file, write_results
from .backtest import build_day_models, evaluation_days, run_benchmark, run_grid
from .market_data import ConfigurationError, DataError, load_esg, load_prices
from .plotting import UnknownStrategy, plot_equity
from .synth import generate

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_DATA, EXIT_FAILED = 0, 1, 2, 3, 4

logger = logging.getLogger("esgcvar")

# acceptance-scale grid written next to synthetic data: 8 standard + 16 BL strategies
SYNTH_GRID = {
    "modes": ["standard", "black_litterman"],
    "lambdas": [0.0, 0.5],
    "alphas": [0.2, 0.8],
    "betas": [0.95, 0.99],
    "rhos_standard": [0.0005],
    "rhos_bl": [0.0005, 0.002],
}
SYNTH_ENGINE = {"window": 700, "test_days": 100, "n_scenarios": 2000}


def _load_inputs(config: cfg.RunConfig):
    for key in ("prices", "esg", "weights"):
        path = getattr(config, key)
        if not path.is_file():
            raise DataError(f"data.{key}: file not found: {path}")
    panel = load_prices(config.prices)
    esg = load_esg(config.esg, config.weights, panel.dates)
    return panel, esg


def _check_span(config: cfg.RunConfig, panel) -> None:
    window = config.settings().window
    if window >= panel.n_dates:
        raise cfg.ConfigError([f"engine.window: needs at least {window + 1} return days "
                               f"(window {window} + 1 test day), data has {panel.n_dates}"])


def _select(strategies, patterns: str | None):
    if not patterns:
        return strategies
    wanted = [p.strip() for p in patterns.split(",") if p.strip()]
    chosen = [s for s in strategies if any(fnmatch.fnmatchcase(s.id, p) for p in wanted)]
    missing = [p for p in wanted if not any(fnmatch.fnmatchcase(s.id, p) for s in strategies)]
    if missing:
        raise cfg.ConfigError([f"--strategies: {p!r} matches no strategy in the grid" for p in missing])
    return chosen


def _with_overrides(config: cfg.RunConfig, args) -> cfg.RunConfig:
    changes = {}
    if getattr(args, "seed_override", None) is not None:
        changes["seed"] = args.seed_override
    if getattr(args, "jobs", None) is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        changes["output"] = Path(args.out)
    return dataclasses.replace(config, **changes) if changes else config


def cmd_validate(args) -> int:
    config = _with_overrides(cfg.load(args.config), args)
    strategies = _select(config.strategies(), args.strategies)
    panel, esg = _load_inputs(config)
    _check_span(config, panel)
    days = evaluation_days(panel, config.settings())
    print(f"config ok: {config.source}")
    print(f"data: {panel.n_assets} assets, {panel.n_dates} return days "
          f"({panel.dates[0].date()} to {panel.dates[-1].date()})")
    print(f"test days: {len(days)} ({panel.dates[days[0]].date()} to {panel.dates[days[-1]].date()})")
    print(f"{len(strategies)} strategies")
    return EXIT_OK


def cmd_backtest(args) -> int:
    config = _with_overrides(cfg.load(args.config), args)
    strategies = _select(config.strategies(), args.strategies)
    panel, esg = _load_inputs(config)
    _check_span(config, panel)
    settings = config.settings()
    jobs = max(1, config.jobs)

    t0 = time.perf_counter()
    logger.info("fitting day models (%d days, %d jobs)", len(evaluation_days(panel, settings)), jobs)
    models = build_day_models(panel, esg, settings, jobs=jobs)
    logger.info("running %d strategies", len(strategies))
    results = run_grid(panel, esg, strategies, settings, jobs=jobs, models=models)
    betas = sorted({s.beta for s in strategies})
    benchmark = run_benchmark(panel, esg, settings, beta=0.95 if 0.95 in betas else betas[0])

    echo = config.echo()
    echo.pop("output")
    echo["data"] = {k: Path(getattr(config, k)).name for k in ("prices", "esg", "weights")}
    manifest = {
        "version": __version__,
        "config": echo,
        "seeds": {"engine": settings.seed, "garch_restarts": "fixed stream 20240917"},
        "settings": settings.to_dict(),
        "inputs": {k: {"file": Path(getattr(config, k)).name, "sha256": sha256_file(getattr(config, k))}
                   for k in ("prices", "esg", "weights")},
        "n_strategies": len(strategies),
    }
    write_results(config.output, results, benchmark, models, manifest)

    failed = [r for r in results if not r.ok]
    logger.info("done in %.1fs; %d ok, %d failed", time.perf_counter() - t0, len(results) - len(failed),
                len(failed))
    print(f"wrote {config.output} ({len(results) - len(failed)} strategies ok, {len(failed)} failed)")
    for r in failed:
        print(f"  failed {r.strategy_id}: {r.error}", file=sys.stderr)
    if failed and len(failed) == len(results):
        return EXIT_FAILED
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_plot(args) -> int:
    if args.out:
        results_dir = Path(args.out)
    elif args.config:
        results_dir = cfg.load(args.config).output
    else:
        raise cfg.ConfigError(["plot: give --out (results directory) or --config"])
    if not (results_dir / "summary.json").is_file():
        raise DataError(f"{results_dir}: no results found (run backtest first)")
    ids = [s.strip() for s in args.strategies.split(",")] if args.strategies else None
    paths = plot_equity(results_dir, ids=ids, top=args.top, out=args.plot_dir)
    print(f"wrote {paths['svg']} ({len(paths['curves'])} curves)")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.out is None:
        raise cfg.ConfigError(["synth: --out is required"])
    out = Path(args.out)
    data = generate(args.assets, args.days, seed=args.data_seed, late_coverage=args.late_coverage)
    paths = data.write(out)
    doc = {
        "seed": args.seed_override if args.seed_override is not None else 0,
        "output": "results",
        "data": {k: p.name for k, p in paths.items()},
        "grid": SYNTH_GRID,
        "engine": dict(SYNTH_ENGINE),
    }
    if args.jobs is not None:
        doc["jobs"] = args.jobs
    (out / "config.yaml").write_text(yaml.safe_dump(doc, sort_keys=False))
    print(f"wrote {args.assets} assets x {args.days} days to {out} (config.yaml included)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esgcvar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--jobs", type=int, help="worker processes (default: config, else all cores)")
        p.add_argument("--seed-override", type=int, help="replace the configured seed")
        p.add_argument("--strategies", help="comma-separated strategy ids or glob patterns")

    p = sub.add_parser("validate", help="check a config and its data; print the grid size")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("backtest", help="run the strategy grid and write results")
    common(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("plot", help="equity curves from a results directory")
    common(p, config_required=False)
    p.add_argument("--top", type=int, help="add the N strategies with the highest annual return")
    p.add_argument("--plot-dir", help="where to write plots (default: <results>/plots)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="write a synthetic dataset and a matching config")
    common(p, config_required=False)
    p.add_argument("--assets", type=int, default=5)
    p.add_argument("--days", type=int, default=800, help="number of daily returns")
    p.add_argument("--data-seed", type=int, default=7, help="seed of the data generator")
    p.add_argument("--late-coverage", type=int, default=0,
                   help="assets without ESG coverage in the first two years")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except UnknownStrategy as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
