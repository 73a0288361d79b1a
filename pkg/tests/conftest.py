import numpy as np
import pandas as pd
import pytest

from esgcvar.market_data import EsgTable, ReturnPanel, load_esg, load_prices
from esgcvar.synth import generate


def make_esg(scores: dict, weights: dict, dates=None) -> EsgTable:
    """EsgTable from ``{year: {ticker: score}}`` and ``{ticker: weight}``."""
    frame = pd.DataFrame.from_dict(scores, orient="index").sort_index()
    frame.index.name = "year"
    table = EsgTable(frame.astype(float), pd.Series(weights, dtype=float))
    return table.attach_calendar(dates) if dates is not None else table


def make_panel(returns, start="2020-01-01", tickers=None) -> ReturnPanel:
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    dates = pd.bdate_range(start, periods=r.shape[0])
    tickers = tuple(tickers or [f"A{k}" for k in range(r.shape[1])])
    return ReturnPanel(dates, tickers, r, np.isfinite(r))


@pytest.fixture(scope="session")
def small_data():
    """3 assets, 330 returns; enough for a 260-day window and 70 test days."""
    data = generate(n_assets=3, n_days=330, seed=11)
    panel = load_prices(data.prices)
    esg = load_esg(data.scores, data.weights, panel.dates)
    return panel, esg


@pytest.fixture(scope="session")
def late_data():
    """4 assets; the last one gains ESG coverage in the test period."""
    data = generate(n_assets=4, n_days=560, seed=5, late_coverage=1)
    panel = load_prices(data.prices)
    esg = load_esg(data.scores, data.weights, panel.dates)
    return panel, esg


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
