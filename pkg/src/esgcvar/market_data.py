"""Price, ESG and index-weight ingestion.

Everything downstream works on a :class:`ReturnPanel` (simple daily returns
with an availability mask) and an :class:`EsgTable` (yearly scores held as a
step function over the trading calendar, plus benchmark composition weights).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Input data is malformed or violates a documented invariant."""


class ConfigurationError(ValueError):
    """A run cannot proceed with the supplied configuration."""


@dataclass(frozen=True)
class ReturnPanel:
    """Aligned N x M matrix of simple daily returns.

    ``returns[i, j]`` is NaN wherever ``availability[i, j]`` is False.
    """

    dates: pd.DatetimeIndex
    assets: tuple[str, ...]
    returns: np.ndarray
    availability: np.ndarray

    def __post_init__(self) -> None:
        n, m = self.returns.shape
        if len(self.dates) != n or len(self.assets) != m:
            raise DataError("panel dimensions do not match dates/assets")
        if self.availability.shape != (n, m):
            raise DataError("availability mask has the wrong shape")
        if len(set(self.assets)) != m:
            raise DataError("duplicate tickers in panel")
        if n > 1 and not self.dates.is_monotonic_increasing or self.dates.has_duplicates:
            raise DataError("panel dates must be strictly increasing")
        finite = np.isfinite(self.returns)
        if np.any(self.availability & ~finite):
            raise DataError("availability marks a non-finite return as present")
        if np.any(self.returns[self.availability] <= -1.0):
            raise DataError("returns must exceed -1 (prices are positive)")

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def asset_index(self, tickers: Iterable[str]) -> np.ndarray:
        lookup = {t: i for i, t in enumerate(self.assets)}
        return np.array([lookup[t] for t in tickers], dtype=int)

    def truncate(self, stop: int) -> "ReturnPanel":
        """Panel restricted to the first ``stop`` dates."""
        return ReturnPanel(
            self.dates[:stop],
            self.assets,
            self.returns[:stop].copy(),
            self.availability[:stop].copy(),
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.returns, index=self.dates, columns=list(self.assets))
        frame.index.name = "date"
        return frame


@dataclass
class EsgTable:
    """Yearly ESG scores and benchmark composition weights.

    A score for year ``Y`` is released on the last trading day of December
    ``Y`` and is effective from the first trading day strictly after that.
    Release dates default to December 31 until :meth:`attach_calendar` is
    called with the trading calendar.
    """

    scores: pd.DataFrame  # index: year, columns: ticker; NaN = missing
    index_weights: pd.Series  # ticker -> C_i, sums to 1
    release_dates: dict[int, pd.Timestamp] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = self.scores.to_numpy(dtype=float)
        if np.any(values[np.isfinite(values)] < 0):
            raise DataError("ESG scores must be nonnegative")
        total = float(self.index_weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise DataError(f"index weights sum to {total!r}, expected 1")
        self.scores = self.scores.sort_index()
        for year in self.scores.index:
            self.release_dates.setdefault(int(year), pd.Timestamp(year=int(year), month=12, day=31))

    def attach_calendar(self, dates: pd.DatetimeIndex) -> "EsgTable":
        """Pin each release to the last calendar date in December of its year."""
        releases = {}
        for year in self.scores.index:
            year = int(year)
            december = dates[(dates.year == year) & (dates.month == 12)]
            releases[year] = december[-1] if len(december) else pd.Timestamp(year=year, month=12, day=31)
        return EsgTable(self.scores.copy(), self.index_weights.copy(), releases)

    @property
    def tickers(self) -> list[str]:
        return list(self.scores.columns)

    def query(self, year: int, ticker: str) -> float | None:
        """Raw score released for ``year``, or None when missing."""
        if year not in self.scores.index or ticker not in self.scores.columns:
            return None
        value = self.scores.at[year, ticker]
        return None if pd.isna(value) else float(value)

    def effective_year(self, date) -> int | None:
        date = pd.Timestamp(date)
        live = [y for y, released in self.release_dates.items() if released < date]
        return max(live) if live else None

    def score_on(self, date, ticker: str) -> float | None:
        year = self.effective_year(date)
        return None if year is None else self.query(year, ticker)

    def scores_on(self, date, tickers: Sequence[str]) -> np.ndarray:
        """Effective raw scores for ``tickers``; raises if any is missing."""
        out = []
        for t in tickers:
            s = self.score_on(date, t)
            if s is None:
                raise ConfigurationError(
                    f"{t} has no ESG score effective on {pd.Timestamp(date).date()}; "
                    "it should have been excluded from the universe"
                )
            out.append(s)
        return np.array(out)


def format_float(value) -> str:
    """Shortest decimal string that reads back to the same double."""
    return repr(float(value))


def _read_table(source) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.copy()
    return pd.read_csv(source, float_precision="round_trip")


def _parse_dates(raw: pd.Series) -> pd.DatetimeIndex:
    parsed = pd.to_datetime(raw, format="ISO8601", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"unparseable date {raw.iloc[row]!r} at row {row + 1}")
    return pd.DatetimeIndex(parsed)


def load_prices(source) -> ReturnPanel:
    """Build a return panel from a ``date,<ticker>,...`` price table.

    The first date is dropped; a return is unavailable when either of the two
    prices it depends on is missing.
    """
    frame = _read_table(source)
    if "date" not in frame.columns:
        raise DataError("price file needs a 'date' column")
    dates = _parse_dates(frame["date"])
    prices = frame.drop(columns="date").apply(pd.to_numeric, errors="coerce")
    tickers = tuple(str(c) for c in prices.columns)
    values = prices.to_numpy(dtype=float)

    bad = np.isfinite(values) & (values <= 0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(f"non-positive price {values[i, j]!r} for {tickers[j]} on row {i + 1}")
    if len(dates) < 2:
        raise DataError("need at least two price rows")
    if not dates.is_monotonic_increasing or dates.has_duplicates:
        raise DataError("price dates must be strictly increasing")

    with np.errstate(invalid="ignore"):
        rets = values[1:] / values[:-1] - 1.0
    avail = np.isfinite(values[1:]) & np.isfinite(values[:-1])
    rets[~avail] = np.nan
    return ReturnPanel(dates[1:], tickers, rets, avail)


def write_returns(panel: ReturnPanel, path) -> None:
    """Write the panel as ISO-dated CSV at full float precision."""
    frame = panel.to_frame()
    frame.index = frame.index.strftime("%Y-%m-%d")
    frame.to_csv(path, float_format=format_float, na_rep="")


def read_returns(source) -> ReturnPanel:
    frame = _read_table(source)
    dates = _parse_dates(frame["date"])
    values = frame.drop(columns="date").to_numpy(dtype=float)
    avail = np.isfinite(values)
    tickers = tuple(str(c) for c in frame.columns if c != "date")
    return ReturnPanel(dates, tickers, values, avail)


def load_esg(score_source, weights_source, calendar: pd.DatetimeIndex | None = None) -> EsgTable:
    """Load yearly scores (``year,<ticker>,...``) and index weights (``ticker,weight``).

    Weights that do not sum to one are renormalized with a warning; they are
    rejected only if renormalization is impossible.
    """
    scores = _read_table(score_source)
    if "year" not in scores.columns:
        raise DataError("ESG file needs a 'year' column")
    years = pd.to_numeric(scores["year"], errors="coerce")
    if years.isna().any():
        raise DataError("unparseable year in ESG file")
    scores = scores.drop(columns="year").apply(pd.to_numeric, errors="coerce")
    scores.index = years.astype(int).to_numpy()
    scores.index.name = "year"
    scores.columns = [str(c) for c in scores.columns]
    if scores.index.has_duplicates:
        raise DataError("duplicate release year in ESG file")
    neg = scores.to_numpy() < 0
    if neg.any():
        i, j = np.argwhere(neg)[0]
        raise DataError(f"negative ESG score for {scores.columns[j]} in {scores.index[i]}")

    weights = _read_table(weights_source)
    if list(weights.columns[:2]) != ["ticker", "weight"]:
        raise DataError("index weight file needs header 'ticker,weight'")
    w = pd.Series(pd.to_numeric(weights["weight"], errors="coerce").to_numpy(),
                  index=weights["ticker"].astype(str).to_numpy())
    if w.isna().any() or (w < 0).any():
        raise DataError("index weights must be nonnegative numbers")
    total = float(w.sum())
    if not np.isfinite(total) or total <= 0:
        raise DataError("index weights cannot be renormalized (non-positive sum)")
    if abs(total - 1.0) > 1e-9:
        logger.warning("index weights sum to %.12g; renormalizing to 1", total)
    w = w / total

    table = EsgTable(scores, w)
    return table.attach_calendar(calendar) if calendar is not None else table


def active_universe(panel: ReturnPanel, esg: EsgTable, date_index: int, window: int) -> list[str]:
    """Tickers with a complete return window before ``date_index`` and an effective score.

    The window is rows ``[date_index - window, date_index)``; the score is the
    one effective on ``panel.dates[date_index]``.
    """
    if not 0 <= date_index < panel.n_dates:
        raise ConfigurationError(f"date index {date_index} outside panel")
    start = date_index - window
    if start < 0:
        raise ConfigurationError(
            f"window of {window} returns needs {window} days before index {date_index}"
        )
    complete = panel.availability[start:date_index].all(axis=0)
    date = panel.dates[date_index]
    universe = [
        t for j, t in enumerate(panel.assets)
        if complete[j] and esg.score_on(date, t) is not None
    ]
    if not universe:
        raise ConfigurationError(f"empty investable universe on {date.date()}")
    return universe


def benchmark_weights(esg: EsgTable, universe: Sequence[str]) -> np.ndarray:
    if not universe:
        raise ConfigurationError("benchmark needs a non-empty universe")
    missing = [t for t in universe if t not in esg.index_weights.index]
    if missing:
        raise ConfigurationError(f"no index weight for {', '.join(missing)}")
    c = esg.index_weights.loc[list(universe)].to_numpy(dtype=float)
    return c / c.sum()
