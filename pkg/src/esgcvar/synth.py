"""Synthetic desk-scale dataset: prices, yearly ESG scores, index weights.

Returns follow per-asset GARCH(1,1) volatility with correlated Student-t
shocks, so the fitting layers see fat tails and volatility clustering.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .market_data import format_float


@dataclass(frozen=True)
class SyntheticData:
    prices: pd.DataFrame  # columns: date, tickers...
    scores: pd.DataFrame  # columns: year, tickers...
    weights: pd.DataFrame  # columns: ticker, weight

    def write(self, directory) -> dict[str, Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"prices": out / "prices.csv", "esg": out / "esg.csv", "weights": out / "weights.csv"}
        self.prices.to_csv(paths["prices"], index=False, float_format=format_float, lineterminator="\n")
        self.scores.to_csv(paths["esg"], index=False, float_format=format_float, na_rep="", lineterminator="\n")
        self.weights.to_csv(paths["weights"], index=False, float_format=format_float, lineterminator="\n")
        return paths


def generate(n_assets: int = 5, n_days: int = 800, seed: int = 7, start: str = "2014-01-02",
             late_coverage: int = 0, drifts=None) -> SyntheticData:
    """Generate ``n_days`` returns (``n_days + 1`` price rows) for ``n_assets`` tickers.

    ``late_coverage`` assets (taken from the end of the ticker list) get no
    ESG score for the first two release years, so they enter the universe
    late. ``drifts`` optionally fixes the per-asset daily mean return.
    """
    rng = np.random.default_rng(seed)
    tickers = [f"A{k:02d}" for k in range(n_assets)]
    dates = pd.bdate_range(start=start, periods=n_days + 1)

    mu = rng.uniform(0.0001, 0.0008, n_assets) if drifts is None else np.asarray(drifts, dtype=float)
    omega = rng.uniform(1e-6, 4e-6, n_assets)
    arch = rng.uniform(0.04, 0.09, n_assets)
    garch = 0.97 - arch - rng.uniform(0.0, 0.03, n_assets)
    loadings = rng.uniform(0.3, 0.7, n_assets)
    corr = np.outer(loadings, loadings)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)

    df = 6.0
    shocks = rng.standard_t(df, size=(n_days, n_assets)) / np.sqrt(df / (df - 2.0))
    shocks = shocks @ chol.T
    var = omega / (1.0 - arch - garch)
    eps_prev = np.zeros(n_assets)
    rets = np.empty((n_days, n_assets))
    for t in range(n_days):
        var = omega + arch * eps_prev**2 + garch * var
        eps_prev = np.sqrt(var) * shocks[t]
        rets[t] = mu + eps_prev
    prices = 100.0 * np.vstack([np.ones(n_assets), np.cumprod(1.0 + rets, axis=0)])
    price_frame = pd.DataFrame(prices, columns=tickers)
    price_frame.insert(0, "date", dates.strftime("%Y-%m-%d"))

    years = list(range(dates[0].year - 1, dates[-1].year + 1))
    base = rng.uniform(40, 90, n_assets)
    score_rows = []
    for n, year in enumerate(years):
        row = np.clip(base + rng.normal(0, 3, n_assets), 0, 100).round(2)
        if late_coverage and n < 2:
            row[n_assets - late_coverage:] = np.nan
        score_rows.append(row)
    scores = pd.DataFrame(score_rows, columns=tickers)
    scores.insert(0, "year", years)

    raw = rng.uniform(0.5, 1.5, n_assets)
    weights = pd.DataFrame({"ticker": tickers, "weight": raw / raw.sum()})
    return SyntheticData(price_frame, scores, weights)
