"""Equity-curve charts from a results directory."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .artifacts import load_summary, read_series  # noqa: E402
from .market_data import format_float  # noqa: E402

# fixed salt and no date stamp keep the SVG byte-stable across runs
_SVG_RC = {"svg.hashsalt": "esgcvar", "svg.fonttype": "path"}


class UnknownStrategy(KeyError):
    def __init__(self, unknown, available):
        self.unknown, self.available = list(unknown), list(available)
        super().__init__(f"unknown strategy id(s) {self.unknown}; available: {', '.join(self.available)}")

    def __str__(self) -> str:
        return self.args[0]


def available_strategies(results_dir) -> list[str]:
    return sorted(load_summary(results_dir)["strategies"])


def select(results_dir, ids=None, top: int | None = None) -> list[str]:
    """Strategy ids to draw: explicit ``ids``, the ``top`` by annual return, or none."""
    summary = load_summary(results_dir)["strategies"]
    chosen = []
    if top:
        ranked = sorted(((s["metrics"]["annual_return"], sid) for sid, s in summary.items()
                         if s["metrics"] is not None), key=lambda t: (-t[0], t[1]))
        chosen += [sid for _, sid in ranked[:top]]
    for sid in ids or []:
        if sid == "benchmark":
            continue
        if sid not in summary:
            raise UnknownStrategy([s for s in ids if s not in summary and s != "benchmark"], sorted(summary))
        if sid not in chosen:
            chosen.append(sid)
    return chosen


def plot_equity(results_dir, ids=None, top: int | None = None, out=None) -> dict:
    """Overlay the selected strategies and the benchmark.

    Writes ``equity.svg`` and one ``curves/<id>.csv`` (date, wealth) per curve
    into ``out`` (default ``<results_dir>/plots``). Returns the written paths.
    """
    results_dir = Path(results_dir)
    out = results_dir / "plots" if out is None else Path(out)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    curves = {}
    for sid in select(results_dir, ids, top) + ["benchmark"]:
        wealth = read_series(results_dir / "strategies" / f"{sid}.csv")["wealth"]
        path = out / "curves" / f"{sid}.csv"
        path.write_text(wealth.to_csv(float_format=format_float, lineterminator="\n"))
        curves[sid] = (wealth, path)

    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(9, 5))
        for sid, (wealth, _) in curves.items():
            dates = pd.to_datetime(wealth.index)
            style = {"color": "black", "linewidth": 2.0} if sid == "benchmark" else {"linewidth": 1.0}
            ax.plot(dates, wealth.to_numpy(), label=sid, **style)
        ax.set_ylabel("wealth")
        ax.legend(fontsize=7)
        ax.grid(alpha=0.3)
        fig.autofmt_xdate()
        svg = out / "equity.svg"
        fig.savefig(svg, format="svg", metadata={"Date": None})
        plt.close(fig)
    return {"svg": svg, "curves": {sid: p for sid, (_, p) in curves.items()}}
