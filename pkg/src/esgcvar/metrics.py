"""Reward-risk ratios and report tables.

Ratios are per-day quantities computed on the daily return series. A ratio
whose risk denominator is zero (or, for STARR and DDR, non-positive) is
reported as ``None`` rather than an infinity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from .market_data import format_float
from .risk import cvar_from_objective

TRADING_DAYS = 252

# Table 1 column order, then turnover
REPORT_COLUMNS = ["Total Return", "Annual Return", "Sharpe", "Sortino", "Gini", "STARR", "DDR", "Turnover"]
_FIELDS = ["total_return", "annual_return", "sharpe", "sortino", "gini", "starr", "ddr", "yearly_turnover"]


@dataclass(frozen=True)
class MetricsRow:
    total_return: float
    annual_return: float
    sharpe: float | None
    sortino: float | None
    gini: float | None
    starr: float | None
    ddr: float | None
    yearly_turnover: float
    max_drawdown: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def as_table_row(self) -> list:
        return [getattr(self, f) for f in _FIELDS]


_NOISE = 64 * np.finfo(float).eps


def _ratio(num: float, den: float, strictly_positive: bool = False, scale: float = 0.0) -> float | None:
    # denominators at rounding-noise level relative to the returns count as zero
    if abs(den) <= _NOISE * scale or (strictly_positive and den < 0) or not np.isfinite(den):
        return None
    return float(num / den)



def gini_mean_difference(returns) -> float:
    """Mean absolute difference over ordered pairs, ``sum|r_i - r_j| / (T (T-1))``.

    Uses the sorted-sample identity ``sum_{i,j} |x_i - x_j| = 2 sum_k (2k - T - 1) x_(k)``.
    """
    x = np.sort(np.asarray(returns, dtype=float))
    t = x.size
    k = np.arange(1, t + 1)
    return float(2.0 * np.sum((2 * k - t - 1) * x) / (t * (t - 1)))


def wealth_curve(returns) -> np.ndarray:
    """Wealth index starting at 1 before the first return (length T + 1)."""
    return np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(returns, dtype=float))])


def max_drawdown(returns) -> float:
    w = wealth_curve(returns)
    peaks = np.maximum.accumulate(w)
    return float(np.max(1.0 - w / peaks))


def downside_deviation(returns, threshold: float = 0.0) -> float:
    r = np.asarray(returns, dtype=float)
    return float(np.sqrt(np.mean(np.minimum(r - threshold, 0.0) ** 2)))


def compute_metrics(daily_returns, daily_turnover, beta: float, risk_free: float = 0.0,
                    annualization: str = "compound") -> MetricsRow:
    """Summary row for one strategy.

    ``annualization="compound"`` gives ``(1 + total)^(252/T) - 1``;
    ``"simple"`` gives ``total * 252 / T``.
    """
    r = np.asarray(daily_returns, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two daily returns")
    if not np.all(np.isfinite(r)) or np.any(r <= -1.0):
        raise ValueError("daily returns must be finite and greater than -1")
    t = r.size
    total = float(np.prod(1.0 + r) - 1.0)
    if annualization == "compound":
        annual = float((1.0 + total) ** (TRADING_DAYS / t) - 1.0)
    elif annualization == "simple":
        annual = total * TRADING_DAYS / t
    else:
        raise ValueError(f"unknown annualization {annualization!r}")

    excess = r - risk_free
    mean = float(np.mean(excess))
    cvar, _ = cvar_from_objective(-excess, beta)
    mdd = max_drawdown(r)
    scale = float(np.max(np.abs(excess)))
    turnover = float(np.sum(np.asarray(daily_turnover, dtype=float))) * TRADING_DAYS / t
    return MetricsRow(
        total_return=total,
        annual_return=annual,
        sharpe=_ratio(mean, float(np.std(excess, ddof=1)), scale=scale),
        sortino=_ratio(mean, downside_deviation(excess), scale=scale),
        gini=_ratio(mean, gini_mean_difference(excess), scale=scale),
        starr=_ratio(mean, cvar, strictly_positive=True, scale=scale),
        ddr=_ratio(total, mdd, strictly_positive=True, scale=float(np.max(np.abs(r)))),
        yearly_turnover=turnover,
        max_drawdown=mdd,
    )


def table_key(mode: str, rho: float, beta: float) -> str:
    tag = "std" if mode == "standard" else "BL"
    return f"CVaR{round(beta * 100):d}_{tag}_rho{rho * 1e4:g}e-4"


def format_report(rows: Iterable[dict], benchmark: MetricsRow | None = None) -> dict[str, pd.DataFrame]:
    """Partition strategy rows into one table per (mode, rho, beta).

    Each row is a mapping with ``mode, lam, alpha, rho, beta`` and ``metrics``
    (a :class:`MetricsRow`). Tables are indexed by ``(lambda, alpha)``; the
    benchmark, when given, becomes its own one-row table under ``"benchmark"``.
    """
    rows = list(rows)
    if not rows and benchmark is None:
        raise ValueError("nothing to report")
    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault((row["mode"], row["rho"], row["beta"]), []).append(row)

    tables = {}
    if benchmark is not None:
        tables["benchmark"] = pd.DataFrame([benchmark.as_table_row()], columns=REPORT_COLUMNS,
                                           index=pd.Index(["benchmark"], name="strategy"))
    order = sorted(groups, key=lambda k: (k[2], k[0] != "standard", k[1]))
    for key in order:
        members = sorted(groups[key], key=lambda r: (r["lam"], r["alpha"]))
        index = pd.MultiIndex.from_tuples([(r["lam"], r["alpha"]) for r in members],
                                          names=["lambda", "alpha"])
        tables[table_key(*key)] = pd.DataFrame([r["metrics"].as_table_row() for r in members],
                                               columns=REPORT_COLUMNS, index=index)
    return tables


def render_csv(table: pd.DataFrame) -> str:
    """CSV with full-precision floats and ``NA`` for undefined ratios."""
    return table.to_csv(float_format=format_float, na_rep="NA", lineterminator="\n")

