"""Empirical VaR / CVaR over scenario losses (loss = -portfolio return)."""

from __future__ import annotations

import math

import numpy as np


def _check_level(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {beta}")


def empirical_var(losses, beta: float) -> float:
    """Lower empirical quantile: the ``ceil(beta * q)``-th smallest loss."""
    _check_level(beta)
    x = np.sort(np.asarray(losses, dtype=float))
    if x.size == 0:
        raise ValueError("no losses")
    # guard against beta * q landing a hair above an integer
    k = max(1, math.ceil(round(beta * x.size, 9)))
    return float(x[k - 1])


def ru_objective(losses, beta: float, threshold: float) -> float:
    """Rockafellar-Uryasev function ``a + sum((L - a)^+) / (q (1 - beta))``."""
    x = np.asarray(losses, dtype=float)
    return float(threshold + np.maximum(x - threshold, 0.0).sum() / (x.size * (1.0 - beta)))


def cvar_from_objective(losses, beta: float) -> tuple[float, float]:
    """Minimize the RU function over thresholds; returns ``(CVaR, VaR*)``.

    The function is piecewise linear and convex in the threshold with kinks at
    the sample points. All sample points are scanned in one vectorized pass;
    when the minimum is a flat segment the smallest minimizer, the order
    statistic ``ceil(beta * q)``, is reported.
    """
    _check_level(beta)
    x = np.sort(np.asarray(losses, dtype=float))
    q = x.size
    if q == 0:
        raise ValueError("no losses")
    # sum of (x_i - x_k)^+ for each candidate k, via suffix sums
    suffix = np.concatenate([np.cumsum(x[::-1])[::-1], [0.0]])
    above = np.searchsorted(x, x, side="right")
    excess = suffix[above] - (q - above) * x
    values = x + excess / (q * (1.0 - beta))
    # rounding in the suffix sums can tilt a flat segment, so take the first near-minimal point
    tol = 16 * np.finfo(float).eps * (np.abs(x).sum() / (q * (1.0 - beta)) + np.abs(x).max())
    near = values <= values.min() + tol
    k = max(1, math.ceil(round(beta * q, 9))) - 1
    best = k if near[k] else int(np.flatnonzero(near)[0])
    var_star = float(x[best])
    # evaluate the winner directly so the value does not carry cumulative-sum rounding
    return ru_objective(x, beta, var_star), var_star


def tail_cvar(losses, beta: float) -> float:
    """CVaR as a tail average: losses beyond VaR plus the VaR atom's share."""
    _check_level(beta)
    x = np.sort(np.asarray(losses, dtype=float))
    q = x.size
    var = empirical_var(x, beta)
    beyond = x[x > var]
    atom = (np.count_nonzero(x <= var) / q - beta)
    return float((beyond.sum() / q + atom * var) / (1.0 - beta))


def portfolio_losses(scenarios, weights) -> np.ndarray:
    """``-w_j . omega`` for each scenario row ``w_j``."""
    s = np.asarray(getattr(scenarios, "scenarios", scenarios), dtype=float)
    w = np.asarray(weights, dtype=float)
    if s.ndim != 2 or s.shape[1] != w.size:
        raise ValueError(f"weights of length {w.size} do not match scenarios {s.shape}")
    return -(s @ w)
