"""Rolling-window, daily-rebalance backtest over a hyperparameter grid.

A decision for panel row ``i`` uses only rows ``[i - window, i)`` and the ESG
score effective on ``dates[i]``; the chosen weights then earn row ``i``'s
returns. Everything that depends only on the data (per-asset fits, mixing
factor, covariance, normalized ESG) lives in a :class:`DayModel` shared by all
strategies; everything strategy-specific is recomputed per run.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from . import black_litterman as bl
from .market_data import ConfigurationError, EsgTable, ReturnPanel, active_universe, benchmark_weights
from .metrics import MetricsRow, compute_metrics
from .nig import NigParams, fit_standardized
from .optimizer import AllocationProblem, solve
from .scenarios import build_scenarios, cholesky_with_jitter, residual_correlation
from .shrinkage import ShrinkageSpec, default_kappa, normalize_scores, shrink_mean
from .timeseries import ArmaGarchParams, FitError, filter_residuals, fit_arma_garch, forecast_one_step

logger = logging.getLogger(__name__)

PAPER_LAMBDAS = (0.0, 0.25, 0.5, 0.7)
PAPER_ALPHAS = tuple(round(0.1 * i, 1) for i in range(11))
PAPER_RHOS_BL = (5e-4, 10e-4, 15e-4, 20e-4, 30e-4, 40e-4)
PAPER_RHOS_STANDARD = (5e-4,)
PAPER_BETAS = (0.95, 0.99)
MODES = ("standard", "black_litterman")

# stand-in marginal when a residual NIG fit fails: effectively Gaussian
_FALLBACK_NIG = NigParams.standardized(100.0, 0.0)


@dataclass(frozen=True)
class EngineSettings:
    window: int = 1007
    test_days: int | None = 1175
    n_scenarios: int = 10_000
    tau: float = 0.05
    risk_aversion: float = 2.5
    kappa: float | None = None  # None: cross-sectional std of window mean returns
    normalization: str = "zscore"
    shrink: str = "mean"  # or "observations"
    mixing: str = "correlation"  # or "covariance"
    seed: int = 0
    refit_every: int = 1
    long_only: bool = True
    garch_max_evals: int = 500
    garch_restarts: int = 3
    views: tuple = ()
    risk_free: float = 0.0
    annualization: str = "compound"  # or "simple"
    benchmark_universe: str = "active"  # or "common": assets active on every test day

    def __post_init__(self) -> None:
        if self.window < 250:
            raise ConfigurationError("window must hold at least 250 returns")
        if self.shrink not in ("mean", "observations"):
            raise ConfigurationError(f"unknown shrink mode {self.shrink!r}")
        if self.mixing not in ("correlation", "covariance"):
            raise ConfigurationError(f"unknown mixing mode {self.mixing!r}")
        if self.refit_every < 1:
            raise ConfigurationError("refit_every must be >= 1")
        if self.benchmark_universe not in ("active", "common"):
            raise ConfigurationError(f"unknown benchmark universe {self.benchmark_universe!r}")
        if self.annualization not in ("compound", "simple"):
            raise ConfigurationError(f"unknown annualization {self.annualization!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["views"] = [dict(v) for v in self.views]
        return d


@dataclass(frozen=True)
class StrategyConfig:
    mode: str
    lam: float
    alpha: float
    rho: float
    beta: float
    n_scenarios: int | None = None  # per-strategy override of the engine default

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if not 0 <= self.lam <= 1 or not 0 <= self.alpha <= 1:
            raise ConfigurationError("lambda and alpha must lie in [0, 1]")
        if self.rho < 0 or not 0.5 < self.beta < 1:
            raise ConfigurationError("need rho >= 0 and beta in (0.5, 1)")

    @property
    def id(self) -> str:
        tag = "std" if self.mode == "standard" else "bl"
        sid = f"{tag}_lam{self.lam:g}_alpha{self.alpha:g}_rho{self.rho * 1e4:g}e-4_beta{self.beta:g}"
        if self.n_scenarios is not None:
            sid += f"_q{self.n_scenarios}"
        return sid

    def to_dict(self) -> dict:
        return asdict(self)


def paper_grid(lambdas=PAPER_LAMBDAS, alphas=PAPER_ALPHAS, betas=PAPER_BETAS,
               rhos_standard=PAPER_RHOS_STANDARD, rhos_bl=PAPER_RHOS_BL,
               modes=MODES) -> list[StrategyConfig]:
    """Cartesian grid; defaults give 4*11*1*2 + 4*11*6*2 = 616 strategies."""
    out = []
    for mode in modes:
        rhos = rhos_standard if mode == "standard" else rhos_bl
        for beta, rho, lam, alpha in itertools.product(betas, rhos, lambdas, alphas):
            out.append(StrategyConfig(mode, float(lam), float(alpha), float(rho), float(beta)))
    return out


@dataclass(frozen=True)
class AssetFit:
    garch: ArmaGarchParams
    nig: NigParams
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class DayModel:
    index: int
    date: pd.Timestamp
    universe: tuple[str, ...]
    asset_keys: tuple[int, ...]  # panel column of each universe member
    mu_forecast: np.ndarray
    sigma_forecast: np.ndarray
    marginals: tuple[NigParams, ...]
    factor: np.ndarray  # Cholesky factor of the mixing matrix
    covariance: np.ndarray  # sample covariance of window returns
    mean_returns: np.ndarray
    scores: np.ndarray  # raw ESG scores effective on `date`
    index_weights: np.ndarray  # C_i, not renormalized
    xi: np.ndarray  # ESG scores in return units
    fits: tuple[AssetFit, ...]
    jitter: float = 0.0

    def diagnostics(self) -> dict:
        return {
            "date": self.date.strftime("%Y-%m-%d"),
            "universe": list(self.universe),
            "jitter": self.jitter,
            "fits": {t: {"garch": f.garch.to_dict(), "nig": f.nig.to_dict(), "warnings": list(f.warnings)}
                     for t, f in zip(self.universe, self.fits)},
        }


def _fit_asset(series: np.ndarray, settings: EngineSettings) -> AssetFit:
    warnings = []
    try:
        garch = fit_arma_garch(series, max_evals=settings.garch_max_evals,
                               restarts=settings.garch_restarts)
    except FitError as exc:
        if exc.best is None:
            raise
        warnings.append(f"garch: {exc}")
        garch = exc.best
    state = filter_residuals(garch, series)
    try:
        shape = fit_standardized(state.standardized)
    except FitError as exc:
        warnings.append(f"nig: {exc}; using Gaussian-limit marginal")
        shape = _FALLBACK_NIG
    return AssetFit(garch, shape, tuple(warnings))


def build_day_model(panel: ReturnPanel, esg: EsgTable, index: int, settings: EngineSettings,
                    reuse: dict[str, AssetFit] | None = None) -> DayModel:
    """Fit everything the strategies need for panel row ``index``.

    ``reuse`` maps tickers to fits from an earlier refit day; those assets are
    only re-filtered on the current window.
    """
    universe = active_universe(panel, esg, index, settings.window)
    cols = panel.asset_index(universe)
    window = panel.returns[index - settings.window:index][:, cols]
    fits, mu, sigma, z = [], [], [], []
    for k, ticker in enumerate(universe):
        series = window[:, k]
        fit = (reuse or {}).get(ticker) or _fit_asset(series, settings)
        state = filter_residuals(fit.garch, series)
        m, s = forecast_one_step(fit.garch, state)
        fits.append(fit)
        mu.append(m)
        sigma.append(s)
        z.append(state.standardized)

    z_panel = np.column_stack(z)
    covariance = np.atleast_2d(np.cov(window, rowvar=False))
    if settings.mixing == "correlation":
        _, factor, jitter = residual_correlation(z_panel)
    else:
        factor, jitter = cholesky_with_jitter(covariance)

    date = panel.dates[index]
    scores = esg.scores_on(date, universe)
    mean_returns = window.mean(axis=0)
    kappa = default_kappa(window) if settings.kappa is None else settings.kappa
    xi = normalize_scores(scores, ShrinkageSpec(0.0, kappa, settings.normalization)) \
        if len(universe) > 1 or settings.normalization == "minmax" else np.zeros(1)
    weights = esg.index_weights.loc[list(universe)].to_numpy(dtype=float)
    return DayModel(index, date, tuple(universe), tuple(int(c) for c in cols),
                    np.array(mu), np.array(sigma), tuple(f.nig for f in fits), factor,
                    covariance, mean_returns, scores, weights, xi, tuple(fits), jitter)


def evaluation_days(panel: ReturnPanel, settings: EngineSettings) -> list[int]:
    start = settings.window
    stop = panel.n_dates if settings.test_days is None else min(panel.n_dates, start + settings.test_days)
    if start >= panel.n_dates:
        raise ConfigurationError(
            f"window of {settings.window} returns needs more than the {panel.n_dates} available days"
        )
    return list(range(start, stop))


def _model_block(args) -> list[DayModel]:
    panel, esg, indices, settings = args
    out, refit = [], {}
    for n, i in enumerate(indices):
        if n == 0:
            model = build_day_model(panel, esg, i, settings)
            refit = dict(zip(model.universe, model.fits))
        else:
            model = build_day_model(panel, esg, i, settings, reuse=refit)
            # assets that entered since the refit day were fitted fresh; keep them
            refit.update({t: f for t, f in zip(model.universe, model.fits) if t not in refit})
        out.append(model)
    return out


def build_day_models(panel: ReturnPanel, esg: EsgTable, settings: EngineSettings,
                     indices: Sequence[int] | None = None, jobs: int = 1) -> dict[int, DayModel]:
    """Day models for every test index, refitting every ``settings.refit_every`` days.

    Blocks between refits are independent, so they run in parallel when
    ``jobs > 1``; the result does not depend on ``jobs``.
    """
    indices = evaluation_days(panel, settings) if indices is None else list(indices)
    k = settings.refit_every
    blocks = [indices[s:s + k] for s in range(0, len(indices), k)]
    tasks = [(panel, esg, block, settings) for block in blocks]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_model_block, tasks))
    else:
        results = [_model_block(t) for t in tasks]
    return {m.index: m for block in results for m in block}


@dataclass
class BacktestResult:
    strategy_id: str
    dates: pd.DatetimeIndex
    daily_returns: np.ndarray
    daily_weights: pd.DataFrame  # dates x panel assets, zero where not held
    daily_turnover: np.ndarray
    metrics: MetricsRow | None
    config: dict
    events: list[str] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    error: str | None = None

    @property
    def wealth(self) -> np.ndarray:
        return np.cumprod(1.0 + self.daily_returns)

    @property
    def ok(self) -> bool:
        return self.error is None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.daily_returns.tobytes())
        h.update(self.daily_turnover.tobytes())
        h.update(np.ascontiguousarray(self.daily_weights.to_numpy()).tobytes())
        return h.hexdigest()


def _scenario_seed(settings: EngineSettings, date: pd.Timestamp, beta: float) -> tuple[int, list]:
    day_key = int(date.strftime("%Y%m%d"))
    return settings.seed, [day_key, int(round(beta * 10_000))]


def expected_returns(model: DayModel, config: StrategyConfig, settings: EngineSettings,
                     w_eq: np.ndarray, shrunk: np.ndarray) -> np.ndarray:
    if config.mode == "standard":
        return shrunk
    pi = bl.equilibrium_premium(settings.risk_aversion, model.covariance, w_eq)
    views = bl.BlViews.from_rows(settings.views, model.universe)
    return bl.posterior(settings.tau, model.covariance, pi, views).mu_bl


def allocation_problem(model: DayModel, config: StrategyConfig, settings: EngineSettings,
                       prev: np.ndarray) -> AllocationProblem:
    """Everything strategy-specific for one day, up to the LP."""
    shrunk = shrink_mean(model.mu_forecast, model.xi, config.lam)
    w_eq = bl.blend_weights(model.index_weights, model.scores, config.lam)
    R = expected_returns(model, config, settings, w_eq, shrunk)
    seed, prefix = _scenario_seed(settings, model.date, config.beta)
    q = config.n_scenarios or settings.n_scenarios
    dispersion = 1.0 - config.lam if settings.shrink == "observations" else 1.0
    sigma = model.sigma_forecast if settings.mixing == "correlation" else 1.0
    marginals = model.marginals
    keys = [prefix + [k] for k in model.asset_keys]
    scen = build_scenarios(marginals, sigma, shrunk, model.factor, q, seed,
                           stream_keys=keys, dispersion=dispersion)
    lower, upper = (0.0, None) if settings.long_only else (-0.1, 1.0)
    return AllocationProblem(R, scen.scenarios, prev, config.alpha, config.rho, config.beta,
                             lower, upper)


def _carry_weights(held: dict[str, float], universe: Sequence[str]) -> np.ndarray | None:
    """Previous weights mapped onto ``universe``; dropped assets' weight is spread pro rata."""
    w = np.array([held.get(t, 0.0) for t in universe])
    total = w.sum()
    return w / total if total > 0 else None


def _realized(panel: ReturnPanel, index: int, cols: Sequence[int]) -> np.ndarray:
    r = panel.returns[index, list(cols)]
    return np.where(np.isfinite(r), r, 0.0)


def run_strategy(panel: ReturnPanel, esg: EsgTable, config: StrategyConfig,
                 settings: EngineSettings, models: dict[int, DayModel] | None = None) -> BacktestResult:
    """Backtest one grid point.

    Initial holdings are the strategy's equilibrium weights on the first
    test day. Each later day trades against the drifted holdings.
    """
    indices = evaluation_days(panel, settings)
    if models is None:
        models = build_day_models(panel, esg, settings, indices)
    dates, rets, turns, weights_rows, events, diags = [], [], [], [], [], []
    held: dict[str, float] | None = None
    universe_prev: tuple[str, ...] | None = None
    for i in indices:
        model = models[i]
        if held is None:
            prev = bl.blend_weights(model.index_weights, model.scores, config.lam)
        else:
            if model.universe != universe_prev:
                gained = sorted(set(model.universe) - set(universe_prev))
                lost = sorted(set(universe_prev) - set(model.universe))
                events.append(f"{model.date.date()}: universe change, +{gained} -{lost}")
            prev = _carry_weights(held, model.universe)
            if prev is None:
                prev = bl.blend_weights(model.index_weights, model.scores, config.lam)
                events.append(f"{model.date.date()}: all holdings left the universe; reset to equilibrium")
        problem = allocation_problem(model, config, settings, prev)
        sol = solve(problem)
        r = _realized(panel, i, model.asset_keys)
        port = float(sol.weights @ r)
        growth = sol.weights * (1.0 + r)
        drifted = growth / growth.sum()
        held = dict(zip(model.universe, drifted.tolist()))
        universe_prev = model.universe

        row = np.zeros(panel.n_assets)
        row[list(model.asset_keys)] = sol.weights
        dates.append(model.date)
        rets.append(port)
        turns.append(sol.turnover)
        weights_rows.append(row)
        diags.append({"date": model.date.strftime("%Y-%m-%d"), "cvar": sol.cvar, "var": sol.var,
                      "objective": sol.objective, **{k: v for k, v in sol.diagnostics.items()
                                                     if k in ("status", "iterations")}})

    daily = np.array(rets)
    turnover = np.array(turns)
    metrics = compute_metrics(daily, turnover, config.beta, settings.risk_free,
                              settings.annualization) if len(daily) >= 2 else None
    frame = pd.DataFrame(np.array(weights_rows).reshape(len(dates), panel.n_assets),
                         index=pd.DatetimeIndex(dates, name="date"), columns=list(panel.assets))
    return BacktestResult(config.id, pd.DatetimeIndex(dates), daily, frame, turnover, metrics,
                          config.to_dict(), events, diags)


def run_benchmark(panel: ReturnPanel, esg: EsgTable, settings: EngineSettings,
                  beta: float = 0.95) -> BacktestResult:
    """Buy-and-hold of renormalized index weights, reset only when the universe changes.

    With ``settings.benchmark_universe == "common"`` the universe is fixed to
    the assets active on every test day, so the index is never reset.
    """
    indices = evaluation_days(panel, settings)
    universes = [tuple(active_universe(panel, esg, i, settings.window)) for i in indices]
    if settings.benchmark_universe == "common":
        common = set.intersection(*(set(u) for u in universes))
        if not common:
            raise ConfigurationError("no asset is active on every test day")
        universes = [tuple(t for t in panel.assets if t in common)] * len(indices)
    dates, rets, turns, rows, events = [], [], [], [], []
    held, universe_prev = None, None
    for i, universe in zip(indices, universes):
        cols = panel.asset_index(universe)
        if universe != universe_prev:
            w = benchmark_weights(esg, universe)
            if held is not None:
                before = np.array([held.get(t, 0.0) for t in universe])
                gone = sum(v for t, v in held.items() if t not in universe)
                turns.append(float(np.abs(w - before).sum() + gone))
                events.append(f"{panel.dates[i].date()}: universe change; benchmark reset")
            else:
                turns.append(0.0)
        else:
            w = np.array([held[t] for t in universe])
            turns.append(0.0)
        r = _realized(panel, i, cols)
        rets.append(float(w @ r))
        growth = w * (1.0 + r)
        held = dict(zip(universe, (growth / growth.sum()).tolist()))
        universe_prev = universe
        row = np.zeros(panel.n_assets)
        row[cols] = w
        rows.append(row)
        dates.append(panel.dates[i])
    daily = np.array(rets)
    turnover = np.array(turns)
    metrics = compute_metrics(daily, turnover, beta, settings.risk_free,
                              settings.annualization) if len(daily) >= 2 else None
    frame = pd.DataFrame(np.array(rows).reshape(len(dates), panel.n_assets),
                         index=pd.DatetimeIndex(dates, name="date"), columns=list(panel.assets))
    return BacktestResult("benchmark", pd.DatetimeIndex(dates), daily, frame, turnover, metrics,
                          {"mode": "benchmark", "beta": beta}, events)


# Grid execution. Workers receive the shared inputs once, through the initializer.
_SHARED: dict = {}


def _init_worker(panel, esg, settings, models) -> None:
    _SHARED.update(panel=panel, esg=esg, settings=settings, models=models)


def _run_one(config: StrategyConfig) -> BacktestResult:
    s = _SHARED
    try:
        return run_strategy(s["panel"], s["esg"], config, s["settings"], s["models"])
    except Exception as exc:  # isolate failures per strategy
        logger.warning("strategy %s failed: %s", config.id, exc)
        return BacktestResult(config.id, pd.DatetimeIndex([]), np.zeros(0), pd.DataFrame(),
                              np.zeros(0), None, config.to_dict(),
                              error=f"{type(exc).__name__}: {exc}")


def run_grid(panel: ReturnPanel, esg: EsgTable, configs: Sequence[StrategyConfig],
             settings: EngineSettings, jobs: int = 1,
             models: dict[int, DayModel] | None = None) -> list[BacktestResult]:
    """One result per config, in input order; a failing strategy yields a result with ``error`` set."""
    if not configs:
        raise ConfigurationError("strategy grid is empty")
    if models is None:
        models = build_day_models(panel, esg, settings, jobs=jobs)
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(panel, esg, settings, models)) as pool:
            return list(pool.map(_run_one, configs))
    _init_worker(panel, esg, settings, models)
    try:
        return [_run_one(c) for c in configs]
    finally:
        _SHARED.clear()

