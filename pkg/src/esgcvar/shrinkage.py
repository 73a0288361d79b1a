"""ESG shrinkage of expected returns.

Raw scores (provider units, roughly 0-100) have to be mapped into return
units before they can bias a daily mean forecast; ``kappa`` is that scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ShrinkageSpec:
    lam: float
    kappa: float
    normalization: str = "zscore"

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.normalization not in ("zscore", "minmax"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


def normalize_scores(raw, spec: ShrinkageSpec) -> np.ndarray:
    """Map raw scores to return units.

    minmax: ``kappa * (s - min) / (max - min)``, all ``kappa / 2`` if the
    scores are identical. zscore: ``kappa * (s - mean) / std`` with the
    population std, all zero if that std is zero.
    """
    s = np.asarray(raw, dtype=float)
    if np.any(s < 0):
        raise ValueError("raw ESG scores must be nonnegative")
    if spec.normalization == "minmax":
        lo, hi = s.min(), s.max()
        if hi == lo:
            return np.full_like(s, 0.5 * spec.kappa)
        return spec.kappa * (s - lo) / (hi - lo)
    if s.size < 2:
        raise ValueError("zscore normalization needs at least two assets")
    sd = s.std()
    if sd == 0:
        return np.zeros_like(s)
    return spec.kappa * (s - s.mean()) / sd


def shrink_mean(mu, xi, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    mu = np.asarray(mu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if mu.shape != xi.shape:
        raise ValueError("forecast and ESG vectors differ in length")
    return (1.0 - lam) * mu + lam * xi


def shrink_observations(x, xi, lam: float) -> np.ndarray:
    """Column-wise blend of an N x M return window toward the ESG vector."""
    return (1.0 - lam) * np.asarray(x, dtype=float) + lam * np.asarray(xi, dtype=float)


def default_kappa(window_returns) -> float:
    """Cross-sectional (population) std of the window's per-asset mean returns."""
    return float(np.std(np.mean(np.asarray(window_returns, dtype=float), axis=0)))
