import dataclasses
import random

import numpy as np
import pandas as pd
import pytest

from esgcvar import black_litterman as bl
from esgcvar.backtest import (EngineSettings, StrategyConfig, build_day_models, evaluation_days,
                              paper_grid, run_benchmark, run_grid, run_strategy)
from esgcvar.market_data import ConfigurationError, active_universe, load_esg, load_prices
from esgcvar.nig import fit_standardized
from esgcvar.optimizer import AllocationProblem, solve
from esgcvar.scenarios import build_scenarios, residual_correlation
from esgcvar.shrinkage import ShrinkageSpec, normalize_scores, shrink_mean
from esgcvar.synth import generate
from esgcvar.timeseries import filter_residuals, fit_arma_garch, forecast_one_step

from .conftest import make_esg, make_panel

FAST = EngineSettings(window=260, test_days=30, n_scenarios=500, refit_every=1, seed=3)


@pytest.fixture(scope="module")
def small_models(small_data):
    panel, esg = small_data
    return build_day_models(panel, esg, FAST)


def cfg(mode="standard", lam=0.5, alpha=0.5, rho=5e-4, beta=0.95, **kw):
    return StrategyConfig(mode, lam, alpha, rho, beta, **kw)


def test_paper_grid_has_616_strategies():
    grid = paper_grid()
    assert len(grid) == 616
    assert sum(c.mode == "standard" for c in grid) == 88
    assert len({c.id for c in grid}) == 616


def test_huge_penalty_gives_buy_and_hold_of_the_equilibrium_weights(small_data, small_models):
    panel, esg = small_data
    res = run_strategy(panel, esg, cfg(rho=1e3, lam=0.25), FAST, small_models)
    assert np.all(res.daily_turnover == 0.0)
    first = small_models[evaluation_days(panel, FAST)[0]]
    w = bl.blend_weights(first.index_weights, first.scores, 0.25)
    expected = []
    for i in evaluation_days(panel, FAST):
        r = panel.returns[i]
        expected.append(float(w @ r))
        w = w * (1 + r) / float(w @ (1 + r))
    np.testing.assert_allclose(res.daily_returns, expected, rtol=0, atol=1e-14)


def test_dominant_asset_takes_all_the_weight():
    rng = np.random.default_rng(0)
    n = 300
    r = np.column_stack([0.004 + 0.004 * rng.standard_normal(n), -0.004 + 0.004 * rng.standard_normal(n)])
    panel = make_panel(r, start="2019-01-01")
    esg = make_esg({2018: {"A0": 50.0, "A1": 50.0}, 2019: {"A0": 50.0, "A1": 50.0}},
                   {"A0": 0.5, "A1": 0.5}, panel.dates)
    settings = EngineSettings(window=250, test_days=10, n_scenarios=200, seed=1)
    res = run_strategy(panel, esg, cfg(lam=0.0, alpha=1.0, rho=0.0), settings)
    np.testing.assert_allclose(res.daily_weights.to_numpy(), np.tile([1.0, 0.0], (10, 1)), atol=1e-12)


def replay(panel, esg, config, settings):
    """The documented daily pipeline written out step by step from the primitives."""
    returns, held = [], None
    for i in evaluation_days(panel, settings):
        date = panel.dates[i]
        universe = active_universe(panel, esg, i, settings.window)
        cols = panel.asset_index(universe)
        window = panel.returns[i - settings.window:i][:, cols]
        mu, sigma, z, shapes = [], [], [], []
        for k in range(len(universe)):
            params = fit_arma_garch(window[:, k], max_evals=settings.garch_max_evals,
                                    restarts=settings.garch_restarts)
            state = filter_residuals(params, window[:, k])
            m, s = forecast_one_step(params, state)
            mu.append(m)
            sigma.append(s)
            z.append(state.standardized)
            shapes.append(fit_standardized(state.standardized))
        _, factor, _ = residual_correlation(np.column_stack(z))
        scores = esg.scores_on(date, universe)
        kappa = float(np.std(window.mean(axis=0)))
        xi = normalize_scores(scores, ShrinkageSpec(0.0, kappa))
        target = shrink_mean(np.array(mu), xi, config.lam)
        weights = esg.index_weights.loc[universe].to_numpy()
        w_eq = bl.blend_weights(weights, scores, config.lam)
        if config.mode == "standard":
            R = target
        else:
            cov = np.cov(window, rowvar=False)
            R = bl.posterior(settings.tau, cov, bl.equilibrium_premium(settings.risk_aversion, cov, w_eq)).mu_bl
        keys = [[int(date.strftime("%Y%m%d")), int(round(config.beta * 10_000)), int(c)] for c in cols]
        scen = build_scenarios(shapes, np.array(sigma), target, factor, settings.n_scenarios,
                               settings.seed, stream_keys=keys)
        prev = w_eq if held is None else held
        sol = solve(AllocationProblem(R, scen.scenarios, prev, config.alpha, config.rho, config.beta))
        r = panel.returns[i, cols]
        returns.append(float(sol.weights @ r))
        held = sol.weights * (1 + r) / float(sol.weights @ (1 + r))
    return np.array(returns)


@pytest.mark.parametrize("mode", ["standard", "black_litterman"])
def test_engine_matches_a_scripted_replay(small_data, small_models, mode):
    panel, esg = small_data
    config = cfg(mode=mode, lam=0.5, alpha=0.6, rho=1e-3)
    res = run_strategy(panel, esg, config, FAST, small_models)
    assert len(res.daily_returns) == 30
    np.testing.assert_allclose(res.daily_returns, replay(panel, esg, config, FAST), rtol=0, atol=1e-12)


def test_wealth_identity_and_nonnegative_turnover(small_data, small_models):
    panel, esg = small_data
    for config in (cfg(), cfg(mode="black_litterman", alpha=0.9, rho=0.0, beta=0.99)):
        res = run_strategy(panel, esg, config, FAST, small_models)
        wealth = 1.0
        for r in res.daily_returns:
            wealth *= 1 + r
        assert res.wealth[-1] == pytest.approx(wealth, rel=1e-12)
        assert np.all(res.daily_turnover >= 0)
        w = res.daily_weights.to_numpy()
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-8)
        assert np.all(w >= -1e-9)


def test_turnover_does_not_grow_with_the_penalty(small_data, small_models):
    panel, esg = small_data
    for mode, alpha in (("black_litterman", 0.7), ("standard", 0.3)):
        turns = [run_strategy(panel, esg, cfg(mode=mode, alpha=alpha, rho=rho), FAST, small_models)
                 .metrics.yearly_turnover for rho in (5e-4, 10e-4, 15e-4, 20e-4, 30e-4, 40e-4)]
        assert all(b <= a + 1e-9 for a, b in zip(turns, turns[1:])), turns


def test_allocation_ignores_data_after_the_next_day(small_data):
    panel, esg = small_data
    settings = dataclasses.replace(FAST, test_days=5)
    days = evaluation_days(panel, settings)
    config = cfg(mode="black_litterman", alpha=0.4, rho=5e-4)
    full = run_strategy(panel, esg, config, settings)
    t = days[2]
    short = run_strategy(panel.truncate(t + 1), esg, config, settings)
    np.testing.assert_array_equal(short.daily_weights.to_numpy(), full.daily_weights.to_numpy()[:3])
    np.testing.assert_array_equal(short.daily_returns, full.daily_returns[:3])


def test_grid_of_one_equals_run_strategy(small_data, small_models):
    panel, esg = small_data
    config = cfg(mode="black_litterman")
    (a,) = run_grid(panel, esg, [config], FAST, models=small_models)
    b = run_strategy(panel, esg, config, FAST, small_models)
    assert a.digest() == b.digest()
    assert a.metrics == b.metrics


def test_grid_is_independent_of_order_and_parallelism(small_data, small_models):
    panel, esg = small_data
    configs = [cfg(mode=m, lam=lam, alpha=a, beta=b) for m in ("standard", "black_litterman")
               for lam in (0.0, 0.7) for a in (0.2, 0.8) for b in (0.95, 0.99)]
    base = {r.strategy_id: r.digest() for r in run_grid(panel, esg, configs, FAST, models=small_models)}
    shuffled = configs[:]
    random.Random(1).shuffle(shuffled)
    again = run_grid(panel, esg, shuffled, FAST, models=small_models)
    assert [r.strategy_id for r in again] == [c.id for c in shuffled]
    assert {r.strategy_id: r.digest() for r in again} == base
    parallel = run_grid(panel, esg, configs, FAST, jobs=2, models=small_models)
    assert {r.strategy_id: r.digest() for r in parallel} == base


def test_day_models_do_not_depend_on_parallelism(small_data):
    panel, esg = small_data
    settings = dataclasses.replace(FAST, test_days=6, refit_every=2)
    a = build_day_models(panel, esg, settings)
    b = build_day_models(panel, esg, settings, jobs=3)
    assert a.keys() == b.keys()
    for i in a:
        np.testing.assert_array_equal(a[i].mu_forecast, b[i].mu_forecast)
        np.testing.assert_array_equal(a[i].factor, b[i].factor)


def test_failing_strategy_is_isolated(small_data, small_models):
    panel, esg = small_data
    good, bad = cfg(), cfg(n_scenarios=50)
    results = run_grid(panel, esg, [bad, good], FAST, models=small_models)
    assert not results[0].ok and "100" in results[0].error
    assert results[1].ok and results[1].digest() == run_strategy(panel, esg, good, FAST, small_models).digest()


def test_empty_grid_rejected(small_data):
    panel, esg = small_data
    with pytest.raises(ConfigurationError):
        run_grid(panel, esg, [], FAST)


def test_single_asset_benchmark_tracks_the_asset():
    r = np.random.default_rng(4).normal(0.0005, 0.01, (300, 1))
    panel = make_panel(r, start="2019-01-01")
    esg = make_esg({2018: {"A0": 60.0}, 2019: {"A0": 60.0}}, {"A0": 1.0}, panel.dates)
    bench = run_benchmark(panel, esg, EngineSettings(window=250, test_days=50))
    np.testing.assert_array_equal(bench.daily_returns, r[250:, 0])


def test_benchmark_drift_hand_example():
    r = np.zeros((252, 2))
    r[250] = [0.1, 0.0]
    panel = make_panel(r, start="2019-01-01")
    esg = make_esg({2018: {"A0": 50.0, "A1": 50.0}}, {"A0": 0.5, "A1": 0.5}, panel.dates)
    bench = run_benchmark(panel, esg, EngineSettings(window=250, test_days=2))
    assert bench.daily_returns[0] == pytest.approx(0.05, abs=1e-15)
    np.testing.assert_allclose(bench.daily_weights.iloc[1], [1.1 / 2.1, 1.0 / 2.1], rtol=1e-15)
    assert bench.daily_weights.iloc[1, 0] == pytest.approx(0.5238095, abs=1e-7)


def test_benchmark_resets_when_the_universe_changes(late_data):
    panel, esg = late_data
    settings = EngineSettings(window=260, test_days=None, n_scenarios=500, refit_every=50)
    bench = run_benchmark(panel, esg, settings)
    assert len(bench.events) == 1 and "universe change" in bench.events[0]
    late = bench.daily_weights.columns[-1]
    held = bench.daily_weights[late].to_numpy()
    first = int(np.argmax(held > 0))
    assert first > 0 and np.all(held[:first] == 0) and np.all(held[first:] > 0)
    assert bench.daily_turnover[first] > 0
    assert np.count_nonzero(bench.daily_turnover) == 1

    common = run_benchmark(panel, esg, dataclasses.replace(settings, benchmark_universe="common"))
    assert common.events == [] and np.all(common.daily_turnover == 0)
    assert np.all(common.daily_weights[late] == 0)


def test_strategy_logs_the_universe_change(late_data):
    panel, esg = late_data
    settings = EngineSettings(window=260, test_days=None, n_scenarios=300, refit_every=100, seed=2)
    res = run_strategy(panel, esg, cfg(mode="black_litterman", alpha=0.5, rho=5e-4), settings)
    assert res.ok and len(res.events) == 1 and "+['A03']" in res.events[0]
    np.testing.assert_allclose(res.daily_weights.sum(axis=1), 1.0, atol=1e-8)


def test_settings_validation():
    with pytest.raises(ConfigurationError):
        EngineSettings(window=100)
    with pytest.raises(ConfigurationError):
        EngineSettings(annualization="log")
    with pytest.raises(ConfigurationError):
        EngineSettings(benchmark_universe="all")
    with pytest.raises(ConfigurationError):
        StrategyConfig("momentum", 0.0, 0.5, 0.0, 0.95)


def test_window_longer_than_the_panel(small_data):
    panel, esg = small_data
    with pytest.raises(ConfigurationError):
        evaluation_days(panel, EngineSettings(window=400))


def test_benchmark_from_files_matches(tmp_path):
    data = generate(n_assets=2, n_days=280, seed=9)
    paths = data.write(tmp_path)
    panel = load_prices(paths["prices"])
    esg = load_esg(paths["esg"], paths["weights"], panel.dates)
    bench = run_benchmark(panel, esg, EngineSettings(window=260, test_days=None))
    assert len(bench.daily_returns) == 20 and bench.metrics is not None
    assert isinstance(bench.dates, pd.DatetimeIndex)
