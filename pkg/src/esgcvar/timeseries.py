"""ARMA(1,1)-GARCH(1,1) with Gaussian innovations.

Mean and variance recursions::

    x_t       = p + phi * x_{t-1} + theta * eps_{t-1} + eps_t
    sigma2_t  = q_c + a * eps_{t-1}**2 + gamma * sigma2_{t-1}

Pre-sample values are ``eps_{-1} = 0``, ``sigma2_{-1} = var(x)`` and
``x_{-1} = p / (1 - phi)`` (the unconditional mean), so every observation
enters the likelihood. Both recursions are linear filters once the other
quantities are known, which lets them run through ``scipy.signal.lfilter``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit

_LOG_2PI = np.log(2.0 * np.pi)
_MAX_PERSISTENCE = 0.9999


class FitError(RuntimeError):
    """Maximum likelihood search failed.

    ``best`` carries the best parameters found, when there are any.
    """

    def __init__(self, message: str, best: "ArmaGarchParams | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ArmaGarchParams:
    p: float
    phi: float
    theta: float
    q_c: float
    a: float
    gamma: float
    loglik: float = float("nan")

    def __post_init__(self) -> None:
        if not abs(self.phi) < 1:
            raise ValueError(f"|phi| must be < 1, got {self.phi}")
        if not self.q_c > 0:
            raise ValueError(f"q_c must be positive, got {self.q_c}")
        if self.a < 0 or self.gamma < 0 or not self.a + self.gamma < 1:
            raise ValueError(f"need a, gamma >= 0 and a + gamma < 1, got {self.a}, {self.gamma}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FilterState:
    """Output of :func:`filter_residuals`."""

    innovations: np.ndarray
    volatility: np.ndarray
    standardized: np.ndarray
    last_value: float
    presample_variance: float

    @property
    def last_innovation(self) -> float:
        return float(self.innovations[-1])

    @property
    def last_variance(self) -> float:
        return float(self.volatility[-1] ** 2)


def _recursions(x, p, phi, theta, q_c, a, gamma, var0):
    x_prev = np.empty_like(x)
    x_prev[0] = p / (1.0 - phi)
    x_prev[1:] = x[:-1]
    u = x - p - phi * x_prev
    eps = lfilter([1.0], [1.0, theta], u)
    drive = np.empty_like(x)
    drive[0] = q_c
    drive[1:] = q_c + a * eps[:-1] ** 2
    sigma2 = lfilter([1.0], [1.0, -gamma], drive, zi=[gamma * var0])[0]
    return eps, sigma2


def _loglik(eps, sigma2) -> float:
    return float(-0.5 * np.sum(_LOG_2PI + np.log(sigma2) + eps**2 / sigma2))


def loglikelihood(params: ArmaGarchParams, series) -> float:
    x = np.asarray(series, dtype=float)
    eps, sigma2 = _recursions(x, params.p, params.phi, params.theta, params.q_c,
                              params.a, params.gamma, float(np.var(x)))
    if np.any(sigma2 <= 0):
        return -np.inf
    return _loglik(eps, sigma2)


def filter_residuals(params: ArmaGarchParams, series,
                     presample_variance: float | None = None) -> FilterState:
    """Run the recursions and return innovations, volatilities and z-scores.

    The pre-sample variance defaults to the sample variance of ``series``;
    pass it explicitly to filter a prefix or extension on the same footing.
    """
    x = np.asarray(series, dtype=float)
    var0 = float(np.var(x)) if presample_variance is None else float(presample_variance)
    eps, sigma2 = _recursions(x, params.p, params.phi, params.theta, params.q_c,
                              params.a, params.gamma, var0)
    if np.any(~(sigma2 > 0)):
        raise FitError("non-positive conditional variance; parameters violate invariants")
    sigma = np.sqrt(sigma2)
    return FilterState(eps, sigma, eps / sigma, float(x[-1]), var0)


def forecast_one_step(params: ArmaGarchParams, state: FilterState) -> tuple[float, float]:
    """Next-step conditional mean and volatility."""
    eps = state.last_innovation
    mu = params.p + params.phi * state.last_value + params.theta * eps
    var = params.q_c + params.a * eps**2 + params.gamma * state.last_variance
    return mu, float(np.sqrt(var))


def simulate(params: ArmaGarchParams, n: int, rng: np.random.Generator, burn: int = 500):
    """Simulate ``n`` points; returns (series, innovations, variances)."""
    total = n + burn
    z = rng.standard_normal(total)
    x = np.empty(total)
    eps = np.empty(total)
    sig2 = np.empty(total)
    uncond = params.q_c / (1.0 - params.a - params.gamma)
    x_prev, e_prev, s_prev = params.p / (1.0 - params.phi), 0.0, uncond
    for t in range(total):
        sig2[t] = params.q_c + params.a * e_prev**2 + params.gamma * s_prev
        eps[t] = np.sqrt(sig2[t]) * z[t]
        x[t] = params.p + params.phi * x_prev + params.theta * e_prev + eps[t]
        x_prev, e_prev, s_prev = x[t], eps[t], sig2[t]
    return x[burn:], eps[burn:], sig2[burn:]


def reconstruct(params: ArmaGarchParams, innovations, x_presample: float | None = None) -> np.ndarray:
    """Invert :func:`filter_residuals`: rebuild the series from its innovations."""
    eps = np.asarray(innovations, dtype=float)
    x_prev = params.p / (1.0 - params.phi) if x_presample is None else x_presample
    out = np.empty_like(eps)
    e_prev = 0.0
    for t, e in enumerate(eps):
        out[t] = params.p + params.phi * x_prev + params.theta * e_prev + e
        x_prev, e_prev = out[t], e
    return out


# Unconstrained coordinates, scaled by the sample moments:
#   mean block:     p / sd, atanh(phi), atanh(theta)
#   variance block: log(q_c / var), logit(persistence), logit(a / persistence)

_MAX_AR = 1.0 - 1e-12


def _logit(v):
    return np.log(v / (1.0 - v))


class _Spec:
    """One nested model: which blocks are estimated, how to map coordinates."""

    def __init__(self, arma: bool, garch: bool, sd: float, var: float, mean: float):
        self.arma, self.garch, self.sd, self.var, self.mean = arma, garch, sd, var, mean
        self.k = 2 + 2 * arma + 2 * garch

    def unpack(self, z):
        i = 0
        p = z[i] * self.sd
        i += 1
        if self.arma:
            # tanh rounds to +-1 for |z| > ~19; keep the stationary mean finite
            phi = float(np.clip(np.tanh(z[i]), -_MAX_AR, _MAX_AR))
            theta = float(np.clip(np.tanh(z[i + 1]), -_MAX_AR, _MAX_AR))
            i += 2
        else:
            phi = theta = 0.0
        q_c = np.exp(z[i]) * self.var
        i += 1
        if self.garch:
            persistence = _MAX_PERSISTENCE * expit(z[i])
            share = expit(z[i + 1])
            a, gamma = persistence * share, persistence * (1.0 - share)
        else:
            a = gamma = 0.0
        return p, phi, theta, q_c, a, gamma

    def initial(self):
        z = [self.mean / self.sd]
        if self.arma:
            z += [0.0, 0.0]
        if self.garch:
            z += [np.log(0.05), _logit(0.95 / _MAX_PERSISTENCE), _logit(0.05 / 0.95)]
        else:
            z += [0.0]
        return np.array(z)


def _search(x, spec: _Spec, max_evals, restarts, jitter, rng):
    var = spec.var

    def objective(z):
        p, phi, theta, q_c, a, gamma = spec.unpack(z)
        eps, sigma2 = _recursions(x, p, phi, theta, q_c, a, gamma, var)
        if not np.all(sigma2 > 0):
            return 1e300
        val = -_loglik(eps, sigma2)
        return val if np.isfinite(val) else 1e300

    base = spec.initial()
    starts = [base] + [base + jitter * rng.standard_normal(base.size) for _ in range(restarts - 1)]
    best_z, best_val, converged = None, np.inf, False
    for z0 in starts:
        res = minimize(objective, z0, method="L-BFGS-B",
                       options={"maxfun": max_evals, "maxiter": max_evals})
        if res.fun < best_val:
            best_z, best_val = res.x, float(res.fun)
        converged = converged or (res.success and res.fun < 1e299)
    if best_z is None or best_val >= 1e299:
        raise FitError("likelihood search found no feasible point")
    p, phi, theta, q_c, a, gamma = (float(v) for v in spec.unpack(best_z))
    return ArmaGarchParams(p, phi, theta, q_c, a, gamma, -best_val), converged


def fit_arma_garch(series, max_evals: int = 500, restarts: int = 3,
                   jitter: float = 0.25, select: str = "bic") -> ArmaGarchParams:
    """Gaussian maximum likelihood fit.

    The full model starts from variance-targeted initials (``a=0.05``,
    ``gamma=0.90``, ``phi=theta=0``, ``p`` the sample mean) plus
    ``restarts - 1`` jittered copies drawn from a fixed stream, so the result
    depends only on the input.

    With ``select="bic"`` the nested models (ARMA only, GARCH only, constant
    mean and variance) are fitted as well and the lowest-BIC one is returned.
    On white noise the full likelihood is flat along ``a = 0`` (``gamma`` is
    unidentified) and along ``phi = -theta``; selection pins those cases to
    the zero coefficients instead of an arbitrary point on the ridge.
    ``select="none"`` returns the unrestricted maximum.

    Raises
    ------
    FitError
        Degenerate input, or no restart of the selected model converged within
        ``max_evals`` likelihood evaluations (``best`` then holds the best
        parameters found).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 250:
        raise FitError(f"need a 1-d series of at least 250 points, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise FitError("series contains non-finite values")
    var = float(np.var(x))
    # summation rounding leaves a constant series with a variance of order 1e-36, not 0
    if not var > max((1e-12 * float(np.max(np.abs(x)))) ** 2, 1e-300):
        raise FitError("series has zero variance")
    if select not in ("bic", "none"):
        raise ValueError(f"unknown selection rule {select!r}")
    sd, mean = np.sqrt(var), float(np.mean(x))
    rng = np.random.default_rng(20240917)

    n_obs = len(x)
    spec = _Spec(True, True, sd, var, mean)
    best, best_ok = _search(x, spec, max_evals, restarts, jitter, rng)
    best_bic = spec.k * np.log(n_obs) - 2 * best.loglik
    if select == "bic":
        # constant mean and variance has a closed-form maximum
        const = ArmaGarchParams(mean, 0.0, 0.0, var, 0.0, 0.0)
        const = ArmaGarchParams(**{**const.to_dict(), "loglik": loglikelihood(const, x)})
        candidates = [(const, True, 2)]
        for arma, garch in ((True, False), (False, True)):
            spec = _Spec(arma, garch, sd, var, mean)
            candidates.append((*_search(x, spec, max_evals, 1, jitter, rng), spec.k))
        for fit, fit_ok, k in candidates:
            bic = k * np.log(n_obs) - 2 * fit.loglik
            if bic < best_bic:
                best, best_ok, best_bic = fit, fit_ok, bic
    if not best_ok:
        raise FitError(f"no restart converged within {max_evals} evaluations", best=best)
    return best
