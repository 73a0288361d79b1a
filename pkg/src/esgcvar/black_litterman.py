"""Black-Litterman equilibrium and posterior with ESG-blended equilibrium weights.

All quantities are in daily return units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .market_data import ConfigurationError, EsgTable


@dataclass(frozen=True)
class BlViews:
    """``K`` linear views ``P @ mu ~ N(v, Omega)``; ``K = 0`` means no views."""

    P: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    omega: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        k = len(self.v)
        if k == 0:
            return
        if self.P.shape[0] != k or self.omega.shape != (k, k):
            raise ValueError("view matrices have inconsistent shapes")
        if np.any(np.all(self.P == 0, axis=1)):
            raise ValueError("a view has an all-zero pick row")
        d = np.diag(self.omega)
        if np.any(d <= 0) or np.any(self.omega - np.diag(d)):
            raise ValueError("Omega must be diagonal with positive entries")

    @property
    def k(self) -> int:
        return len(self.v)

    @classmethod
    def from_rows(cls, rows: Sequence[dict], tickers: Sequence[str]) -> "BlViews":
        """Build views from config rows ``{"picks": {ticker: coef}, "value": v, "uncertainty": omega}``.

        Picks naming tickers outside ``tickers`` are dropped; a view left with
        no picks is dropped entirely.
        """
        index = {t: i for i, t in enumerate(tickers)}
        P, v, om = [], [], []
        for row in rows:
            pick = np.zeros(len(tickers))
            for t, c in row["picks"].items():
                if t in index:
                    pick[index[t]] = float(c)
            if np.any(pick):
                P.append(pick)
                v.append(float(row["value"]))
                om.append(float(row["uncertainty"]))
        if not P:
            return cls()
        return cls(np.array(P), np.array(v), np.diag(om))


@dataclass(frozen=True)
class BlPosterior:
    mu_bl: np.ndarray
    sigma_bl_mu: np.ndarray


def esg_weights(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    total = s.sum()
    if not total > 0:
        raise ConfigurationError("ESG scores sum to zero; cannot form ESG weights")
    return s / total


def blend_weights(index_weights, scores, lam: float) -> np.ndarray:
    """``(1 - lam) * C / sum(C) + lam * xi / sum(xi)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    c = np.asarray(index_weights, dtype=float)
    return (1.0 - lam) * c / c.sum() + lam * esg_weights(scores)


def equilibrium_weights(esg: EsgTable, universe: Sequence[str], date, lam: float) -> np.ndarray:
    missing = [t for t in universe if t not in esg.index_weights.index]
    if missing:
        raise ConfigurationError(f"no index weight for {', '.join(missing)}")
    c = esg.index_weights.loc[list(universe)].to_numpy(dtype=float)
    return blend_weights(c, esg.scores_on(date, universe), lam)


def equilibrium_premium(risk_aversion: float, sigma, w_eq) -> np.ndarray:
    """``Pi = delta * Sigma @ w_eq``."""
    return risk_aversion * np.asarray(sigma, dtype=float) @ np.asarray(w_eq, dtype=float)


def posterior(tau: float, sigma, pi, views: BlViews | None = None) -> BlPosterior:
    """Posterior mean and covariance of the mean.

    With views, solves ``[(tau S)^-1 + P' W P] mu = (tau S)^-1 pi + P' W v`` with
    ``W = Omega^-1``. Without views the prior is returned unchanged.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    sigma = np.asarray(sigma, dtype=float)
    pi = np.asarray(pi, dtype=float)
    prior_cov = tau * sigma
    if views is None or views.k == 0:
        return BlPosterior(pi.copy(), prior_cov)

    # Work with (tau S) directly so an exact-view limit (Omega -> 0) stays well conditioned:
    #   mu = pi + tS P' (P tS P' + Omega)^-1 (v - P pi)
    #   cov = tS - tS P' (P tS P' + Omega)^-1 P tS
    P, v, omega = views.P, views.v, views.omega
    middle = P @ prior_cov @ P.T + omega
    try:
        gain = np.linalg.solve(middle, P @ prior_cov).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Black-Litterman view system is singular") from exc
    mu = pi + gain @ (v - P @ pi)
    cov = prior_cov - gain @ P @ prior_cov
    return BlPosterior(mu, 0.5 * (cov + cov.T))
