"""ESG-tilted mean-CVaR portfolio backtesting.

Per-asset ARMA(1,1)-GARCH(1,1) forecasts, NIG residual marginals mixed into
joint scenarios, ESG shrinkage of expected returns (optionally through a
Black-Litterman prior), and a turnover-penalized mean-CVaR linear program,
run day by day over a hyperparameter grid.
"""

__version__ = "0.1.0"
