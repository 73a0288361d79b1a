"""Turnover-penalized mean-CVaR allocation as a linear program.

maximize   alpha * R'w - (1 - alpha) * [zeta + sum(s) / (q (1 - beta))] - rho * sum(u + d)
subject to s_j >= -w'x_j - zeta,  s >= 0
           w = w_prev + u - d,  u, d >= 0
           w >= 0 (or the box [lower, upper]),  sum(w) = 1

The weights are eliminated in favour of the trade variables ``(u, d)`` so a
solution that does not trade returns ``w_prev`` bit for bit.

By default the dual is solved instead. It has one bounded variable per
scenario but only ``2M + 1`` rows (``3M + 1`` with an upper bound), so the
simplex basis stays small however many scenarios are drawn. The trades are
read back from the row multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .risk import cvar_from_objective, portfolio_losses


class InfeasibleProblem(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class AllocationProblem:
    expected_returns: np.ndarray
    scenarios: np.ndarray
    prev_weights: np.ndarray
    alpha: float
    rho: float
    beta: float
    lower: float = 0.0
    upper: float | None = None

    def __post_init__(self) -> None:
        r = np.asarray(self.expected_returns, dtype=float)
        s = np.asarray(self.scenarios, dtype=float)
        w = np.asarray(self.prev_weights, dtype=float)
        m = r.size
        if s.ndim != 2 or s.shape[1] != m or w.size != m:
            raise ValueError("expected returns, scenarios and previous weights disagree on M")
        if s.shape[0] < 100:
            raise ValueError(f"need at least 100 scenarios, got {s.shape[0]}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if np.any(w < self.lower - 1e-9) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("previous weights must be feasible and sum to 1")


@dataclass(frozen=True)
class AllocationSolution:
    weights: np.ndarray
    objective: float
    var: float
    cvar: float
    turnover: float
    diagnostics: dict = field(default_factory=dict)


_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


_TRADE_SNAP = 1e-12


def objective_value(problem: AllocationProblem, weights) -> float:
    """Penalized objective evaluated directly through the empirical CVaR."""
    w = np.asarray(weights, dtype=float)
    cvar, _ = cvar_from_objective(portfolio_losses(problem.scenarios, w), problem.beta)
    return (problem.alpha * float(w @ problem.expected_returns)
            - (1.0 - problem.alpha) * cvar
            - problem.rho * float(np.abs(w - problem.prev_weights).sum()))


def _solve_primal(problem: AllocationProblem, R, X, prev):
    q, m = X.shape
    a, rho = problem.alpha, problem.rho
    tail = (1.0 - a) / (q * (1.0 - problem.beta))

    # variable order: u (m), d (m), zeta (1), s (q)
    c = np.concatenate([-a * R + rho, a * R + rho, [1.0 - a], np.full(q, tail)])

    Xs = sparse.csr_matrix(X)
    scen_rows = sparse.hstack([-Xs, Xs, sparse.csr_matrix(-np.ones((q, 1))), -sparse.identity(q)])
    eye = sparse.identity(m)
    zero_tail = sparse.csr_matrix((m, 1 + q))
    blocks = [scen_rows, sparse.hstack([-eye, eye, zero_tail])]
    rhs = [X @ prev, prev - problem.lower]
    if problem.upper is not None:
        blocks.append(sparse.hstack([eye, -eye, zero_tail]))
        rhs.append(problem.upper - prev)
    A_ub = sparse.vstack(blocks).tocsc()
    b_ub = np.concatenate(rhs)
    A_eq = sparse.csr_matrix(np.concatenate([np.ones(m), -np.ones(m), np.zeros(1 + q)])[None, :])
    b_eq = np.array([1.0 - prev.sum()])
    bounds = [(0, None)] * (2 * m) + [(None, None)] + [(0, None)] * q

    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options=_HIGHS_OPTIONS)
    if res.status != 0:
        return res, None, None
    return res, res.x[:m], res.x[m:2 * m]


def _solve_dual(problem: AllocationProblem, R, X, prev):
    q, m = X.shape
    a, rho = problem.alpha, problem.rho
    tail = (1.0 - a) / (q * (1.0 - problem.beta))
    boxed = problem.upper is not None

    # variable order: y (q), lower-bound multipliers (m), [upper-bound multipliers (m)], budget (1)
    n_mult = m * (2 if boxed else 1)
    c = np.concatenate([X @ prev, prev - problem.lower]
                       + ([problem.upper - prev] if boxed else []) + [[prev.sum() - 1.0]])
    G = np.hstack([X.T, np.eye(m)] + ([-np.eye(m)] if boxed else []) + [np.ones((m, 1))])
    # |alpha R + G z| <= rho, row by row
    A_ub = np.vstack([G, -G])
    b_ub = np.concatenate([rho - a * R, rho + a * R])
    A_eq = np.concatenate([np.ones(q), np.zeros(n_mult + 1)])[None, :]
    bounds = [(0.0, tail)] * q + [(0.0, None)] * n_mult + [(None, None)]

    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0 - a], bounds=bounds,
                  method="highs", options=_HIGHS_OPTIONS)
    if res.status != 0:
        return res, None, None
    marg = res.ineqlin.marginals
    # clip the solver's -0.0 / tiny negative noise; slack rows give exact zeros
    return res, np.maximum(-marg[:m], 0.0), np.maximum(-marg[m:], 0.0)


def solve(problem: AllocationProblem, formulation: str = "dual") -> AllocationSolution:
    """Solve the allocation LP.

    ``formulation`` is ``"dual"`` (default, small basis) or ``"primal"``
    (the direct scenario-row form). Both give the same optimum; the reported
    objective, VaR and CVaR are recomputed from the returned weights.
    """
    R = np.asarray(problem.expected_returns, dtype=float)
    X = np.asarray(problem.scenarios, dtype=float)
    prev = np.asarray(problem.prev_weights, dtype=float)
    if formulation == "dual":
        res, u, d = _solve_dual(problem, R, X, prev)
    elif formulation == "primal":
        res, u, d = _solve_primal(problem, R, X, prev)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    diagnostics = {"status": int(res.status), "message": str(res.message),
                   "iterations": int(getattr(res, "nit", -1)), "formulation": formulation}
    # an unbounded dual means an infeasible primal
    if (formulation == "primal" and res.status == 2) or (formulation == "dual" and res.status == 3):
        raise InfeasibleProblem(f"allocation LP infeasible: {res.message}")
    if res.status != 0:
        raise SolverError(f"allocation LP did not solve ({res.message})")

    a, rho = problem.alpha, problem.rho
    trade = u - d
    # multiplier noise on untraded names would otherwise perturb held weights
    trade[np.abs(trade) < _TRADE_SNAP] = 0.0
    weights = prev + trade
    losses = portfolio_losses(X, weights)
    cvar, var = cvar_from_objective(losses, problem.beta)
    turnover = float(np.abs(weights - prev).sum())
    sign = 1.0 if formulation == "dual" else -1.0
    diagnostics["lp_objective"] = sign * float(res.fun) + a * float(R @ prev)
    objective = a * float(weights @ R) - (1.0 - a) * cvar - rho * turnover
    return AllocationSolution(weights, objective, var, cvar, turnover, diagnostics)


def pareto_sweep(base: AllocationProblem, alphas: Sequence[float] | None = None) -> list[AllocationSolution]:
    """Solve ``base`` for each alpha on a shared scenario set (default 0, 0.1, ..., 1)."""
    if alphas is None:
        alphas = [round(0.1 * i, 1) for i in range(11)]
    out = []
    for alpha in alphas:
        problem = AllocationProblem(base.expected_returns, base.scenarios, base.prev_weights,
                                    float(alpha), base.rho, base.beta, base.lower, base.upper)
        out.append(solve(problem))
    return out
