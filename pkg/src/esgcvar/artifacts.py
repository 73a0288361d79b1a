"""On-disk results: per-strategy series, report tables, summary and manifest.

Layout under the output directory::

    strategies/<id>.csv      date, return, wealth, turnover, w_<ticker>...
    strategies/benchmark.csv
    diagnostics/<id>.json    per-day solver diagnostics and events
    report/<table>.csv       one table per (mode, rho, beta), plus benchmark.csv
    summary.json             metrics per strategy and for the benchmark
    manifest.json            config echo, input checksums, seeds, version, failures

Every file is a pure function of the inputs: floats are written as their shortest
round-trip decimal, JSON keys are sorted and no timestamps are recorded.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .backtest import BacktestResult, DayModel
from .market_data import format_float
from .metrics import MetricsRow, format_report, render_csv

SERIES_COLUMNS = ["return", "wealth", "turnover"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj, path) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1, allow_nan=False, default=_jsonable)
    Path(path).write_text(text + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def series_frame(result: BacktestResult) -> pd.DataFrame:
    frame = pd.DataFrame({"return": result.daily_returns, "wealth": result.wealth,
                          "turnover": result.daily_turnover},
                         index=pd.Index(result.dates.strftime("%Y-%m-%d"), name="date"))
    weights = result.daily_weights.copy()
    weights.index = frame.index
    weights.columns = [f"w_{c}" for c in weights.columns]
    return pd.concat([frame, weights], axis=1)


def write_series(result: BacktestResult, path) -> None:
    Path(path).write_text(series_frame(result).to_csv(float_format=format_float, lineterminator="\n"))


def read_series(path) -> pd.DataFrame:
    return pd.read_csv(path, index_col="date", float_precision="round_trip")


def _metrics_dict(m: MetricsRow | None):
    return None if m is None else m.to_dict()


def report_rows(results: Sequence[BacktestResult]) -> list[dict]:
    return [{**{k: r.config[k] for k in ("mode", "lam", "alpha", "rho", "beta")}, "metrics": r.metrics}
            for r in results if r.ok and r.metrics is not None]


def write_results(out, results: Sequence[BacktestResult], benchmark: BacktestResult,
                  models: dict[int, DayModel], manifest: dict) -> dict:
    """Write every artifact; returns the manifest as written."""
    out = Path(out)
    for sub in ("strategies", "diagnostics", "report"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    failures = {}
    strategies = {}
    for r in results:
        if not r.ok:
            failures[r.strategy_id] = r.error
            continue
        write_series(r, out / "strategies" / f"{r.strategy_id}.csv")
        dump_json({"events": r.events, "days": r.diagnostics}, out / "diagnostics" / f"{r.strategy_id}.json")
        strategies[r.strategy_id] = {"config": r.config, "digest": r.digest(), "events": r.events}
    write_series(benchmark, out / "strategies" / "benchmark.csv")

    tables = format_report(report_rows(results), benchmark.metrics)
    for name, table in tables.items():
        (out / "report" / f"{name}.csv").write_text(render_csv(table))

    summary = {
        "benchmark": _metrics_dict(benchmark.metrics),
        "strategies": {r.strategy_id: {"config": r.config, "metrics": _metrics_dict(r.metrics)}
                       for r in results if r.ok},
        "failed": sorted(failures),
    }
    dump_json(summary, out / "summary.json")

    manifest = dict(manifest)
    manifest.update({
        "strategies": strategies,
        "failures": failures,
        "benchmark": {"digest": benchmark.digest(), "events": benchmark.events},
        "report_tables": sorted(tables),
        "days": [models[i].diagnostics() for i in sorted(models)],
    })
    dump_json(manifest, out / "manifest.json")
    return manifest


def load_summary(out) -> dict:
    return json.loads((Path(out) / "summary.json").read_text())
