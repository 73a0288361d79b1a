"""Correlated next-day return scenarios.

Independent standardized NIG draws ``Y`` (one column per asset) are mixed by
the Cholesky factor ``L`` of the residual correlation matrix and scaled by
the GARCH volatility forecast, then shifted by the shrunk mean::

    w_j = m + diag(sigma) @ L @ y_j

which is the affine construction ``X = A Y + m`` with ``A = diag(sigma) L``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nig import NigParams, sample

logger = logging.getLogger(__name__)


class ConditioningError(np.linalg.LinAlgError):
    pass


def cholesky_with_jitter(matrix, start: float = 1e-10, stop: float = 1e-6):
    """Lower Cholesky factor, adding ``eps * I`` (eps escalating x10) if needed.

    Returns ``(L, eps)`` with ``eps = 0.0`` when no jitter was required.
    """
    a = np.asarray(matrix, dtype=float)
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    eps = start
    while eps <= stop * (1 + 1e-12):
        try:
            factor = np.linalg.cholesky(a + eps * np.eye(len(a)))
        except np.linalg.LinAlgError:
            eps *= 10.0
            continue
        logger.warning("matrix needed jitter %.0e to factor", eps)
        return factor, eps
    raise ConditioningError(f"matrix is not positive definite even with jitter {stop:g}")


def residual_correlation(z_panel) -> tuple[np.ndarray, np.ndarray, float]:
    """Correlation of standardized residuals, its Cholesky factor and the jitter used.

    When jitter is applied the returned correlation is the conditioned one,
    so ``L @ L.T`` always reproduces it.
    """
    z = np.asarray(z_panel, dtype=float)
    if z.ndim != 2 or z.shape[0] < 250:
        raise ValueError(f"need an N x M residual panel with N >= 250, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("residual panel has missing entries")
    if z.shape[1] == 1:
        return np.ones((1, 1)), np.ones((1, 1)), 0.0
    corr = np.corrcoef(z, rowvar=False)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    factor, eps = cholesky_with_jitter(corr)
    if eps:
        corr = corr + eps * np.eye(len(corr))
    return corr, factor, eps


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: np.ndarray  # q x M
    mean: np.ndarray  # m
    mixing_factor: np.ndarray  # L (lower triangular)
    marginals: tuple[tuple[NigParams, float], ...]  # (shape, sigma_{t+1}) per asset
    seed: tuple

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.shape[0]


def draw_standardized(marginals: Sequence[NigParams], q: int, seed: int,
                      stream_keys: Sequence[int]) -> np.ndarray:
    """q x M matrix of independent standardized NIG draws.

    Column ``k`` comes from its own stream ``SeedSequence(seed, spawn_key=stream_keys[k])``,
    so a column does not depend on which other assets are present.
    """
    cols = []
    for params, key in zip(marginals, stream_keys):
        ss = np.random.SeedSequence(seed, spawn_key=tuple(np.atleast_1d(key).tolist()))
        cols.append(sample(params, q, np.random.default_rng(ss)))
    return np.column_stack(cols) if cols else np.empty((q, 0))


def mix(y: np.ndarray, factor: np.ndarray, sigma, mean, dispersion: float = 1.0) -> np.ndarray:
    """``m + dispersion * sigma * (y @ L.T)`` row by row."""
    scale = dispersion * np.asarray(sigma, dtype=float)
    return np.asarray(mean, dtype=float) + (y @ factor.T) * scale


def build_scenarios(marginals: Sequence[NigParams], sigma, mean, factor, q: int,
                    seed: int, stream_keys: Sequence | None = None,
                    dispersion: float = 1.0) -> ScenarioSet:
    """Draw ``q`` correlated scenarios.

    ``factor`` is the Cholesky factor of the mixing matrix (correlation by
    default). Pass ``sigma = 1`` with a covariance factor to mix raw returns
    directly. ``dispersion`` multiplies the centred part, which is how the
    per-observation ESG blend scales the spread by ``1 - lambda``.
    """
    if q < 1:
        raise ValueError("need at least one scenario")
    m = len(marginals)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (m,))
    keys = list(range(m)) if stream_keys is None else list(stream_keys)
    y = draw_standardized(marginals, q, seed, keys)
    w = mix(y, factor, sigma, mean, dispersion)
    return ScenarioSet(w, np.asarray(mean, dtype=float), np.asarray(factor),
                       tuple(zip(marginals, sigma.tolist())), (seed, tuple(map(str, keys))))
