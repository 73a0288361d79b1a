"""Normal-inverse Gaussian marginals.

Density, for ``g = sqrt(alpha**2 - beta**2)`` and ``s = sqrt(delta**2 + (x - mu)**2)``::

    f(x) = alpha * delta * K1(alpha * s) / (pi * s) * exp(delta * g + beta * (x - mu))

The GARCH layer owns location and scale, so residual fits are *standardized*:
only ``(alpha, beta)`` are free and ``delta, mu`` follow from mean 0 and
variance 1, i.e. ``delta = g**3 / alpha**2`` and ``mu = -delta * beta / g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import minimize

from .timeseries import FitError

_LOG_PI = np.log(np.pi)


@dataclass(frozen=True)
class NigParams:
    alpha: float
    beta: float
    delta: float
    mu: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.delta > 0 and abs(self.beta) < self.alpha):
            raise ValueError(f"invalid NIG parameters {self}")

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.alpha**2 - self.beta**2))

    @property
    def mean(self) -> float:
        return self.mu + self.delta * self.beta / self.gamma

    @property
    def variance(self) -> float:
        return self.delta * self.alpha**2 / self.gamma**3

    @property
    def skewness(self) -> float:
        return 3.0 * self.beta / (self.alpha * np.sqrt(self.delta * self.gamma))

    @classmethod
    def standardized(cls, alpha: float, beta: float) -> "NigParams":
        """Mean-0, variance-1 member with the given shape."""
        g = np.sqrt(alpha**2 - beta**2)
        delta = g**3 / alpha**2
        return cls(float(alpha), float(beta), float(delta), float(-delta * beta / g))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "delta": self.delta, "mu": self.mu}


def nig_logpdf(x, params: NigParams) -> np.ndarray:
    """Log density, using the exponentially scaled Bessel ``k1e`` to avoid overflow."""
    a, b, d, m = params.alpha, params.beta, params.delta, params.mu
    y = np.asarray(x, dtype=float) - m
    s = np.hypot(d, y)
    arg = a * s
    # log K1(z) = log(k1e(z)) - z
    log_k1 = np.log(special.k1e(arg)) - arg
    return np.log(a) + np.log(d) + log_k1 - _LOG_PI - np.log(s) + d * params.gamma + b * y


def nig_pdf(x, params: NigParams):
    out = np.exp(nig_logpdf(x, params))
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("NIG density is not finite at the requested points")
    return out


def _shape_from_coords(log_scale_free: float, atanh_ratio: float) -> tuple[float, float]:
    # scale-free tail parameter alpha * delta = alpha**2 * (1 - r**2)**1.5 for the standardized member
    r = np.tanh(atanh_ratio)
    alpha = np.sqrt(np.exp(log_scale_free) / (1.0 - r * r) ** 1.5)
    return float(alpha), float(r * alpha)


def _moment_start(z: np.ndarray) -> np.ndarray:
    c = z - z.mean()
    m2 = np.mean(c**2)
    skew = np.mean(c**3) / m2**1.5
    exkurt = np.mean(c**4) / m2**2 - 3.0
    if exkurt <= 0.05:
        return np.array([np.log(100.0), 0.0])
    # standardized NIG: skew**2 / exkurt = 3 r**2 / (1 + 4 r**2)
    ratio = min(skew * skew / exkurt, 0.7)
    r = np.sign(skew) * np.sqrt(ratio / (3.0 - 4.0 * ratio))
    alpha2 = 3.0 * (1.0 + 4.0 * r * r) / (exkurt * (1.0 - r * r) ** 2)
    return np.array([np.log(alpha2 * (1.0 - r * r) ** 1.5), np.arctanh(r)])


_LOG_SCALE_BOUNDS = (np.log(1e-3), np.log(1e6))
_ATANH_BOUND = 8.0


def fit_standardized(residuals, max_iter: int = 500) -> NigParams:
    """Maximum likelihood ``(alpha, beta)`` on standardized residuals.

    The search runs over ``(log(alpha * delta), atanh(beta / alpha))``, both
    unconstrained and well scaled, from a method-of-moments start. Gaussian
    data pushes ``alpha`` toward the upper bound of the search box, which is
    accepted; an asymmetry ratio at its bound is not.
    """
    z = np.asarray(residuals, dtype=float)
    if z.ndim != 1 or len(z) < 250:
        raise FitError(f"need at least 250 residuals, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise FitError("residuals contain non-finite values")
    v = float(np.var(z, ddof=1))
    if not 0.5 <= v <= 2.0:
        raise FitError(f"residual variance {v:.4g} is outside [0.5, 2]; not standardized")

    def objective(c):
        alpha, beta = _shape_from_coords(*c)
        try:
            p = NigParams.standardized(alpha, beta)
        except ValueError:
            return 1e300
        val = -float(np.sum(nig_logpdf(z, p)))
        return val if np.isfinite(val) else 1e300

    start = _moment_start(z)
    start[0] = np.clip(start[0], *_LOG_SCALE_BOUNDS)
    start[1] = np.clip(start[1], -_ATANH_BOUND + 1, _ATANH_BOUND - 1)
    res = minimize(objective, start, method="L-BFGS-B", jac="3-point",
                   bounds=[_LOG_SCALE_BOUNDS, (-_ATANH_BOUND, _ATANH_BOUND)],
                   options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-9})
    alpha, beta = _shape_from_coords(*res.x)
    if abs(res.x[1]) >= _ATANH_BOUND - 1e-6 or not abs(beta) < alpha:
        raise FitError(f"asymmetry hit the boundary (beta/alpha = {beta / alpha:.6f}); "
                       "residual tails look heavier than NIG allows")
    # status 2 is a line search stalled at machine precision, i.e. already optimal
    if res.status not in (0, 2) or res.fun >= 1e299:
        raise FitError(f"NIG likelihood search failed: {res.message}")
    return NigParams.standardized(alpha, beta)


def sample(params: NigParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draws via the normal mean-variance mixture with inverse-Gaussian mixing."""
    v = rng.wald(params.delta / params.gamma, params.delta**2, size=n)
    return params.mu + params.beta * v + np.sqrt(v) * rng.standard_normal(n)


def sample_standardized(params: NigParams, n: int, seed) -> np.ndarray:
    """``n`` draws from a standardized member; ``seed`` is anything numpy accepts."""
    if abs(params.mean) > 1e-9 or abs(params.variance - 1.0) > 1e-9:
        raise ValueError("parameters are not standardized (mean 0, variance 1)")
    return sample(params, n, np.random.default_rng(seed))
