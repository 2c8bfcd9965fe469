"""Perron-Frobenius eigenproblem for the pricing operator.

For an irreducible state-price matrix ``A`` there is a unique (up to scale)
positive eigenvector ``pi`` with ``A pi = exp(-lam) pi``. It factorizes the
kernel as ``S_t = exp(-lam t) pi(X_0)/pi(X_t) M_t`` with ``M`` a positive
martingale, and ``M`` changes measure to the eigen-measure whose one-step
transition matrix is ``exp(lam) A(x, y) pi(y)/pi(x)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _graph
from .errors import (
    HorizonTooShort,
    InvalidPathWarning,
    InvalidSolution,
    NoConvergence,
    NotRecurrent,
    PeriodicChain,
    ReducibleChain,
    ValidationError,
)
from .model import CashFlowSpec, MarkovPricingModel, apply_pricing_operator, path_log_sdf

ALPHA_MARGIN = 1e-9
# reported in place of an infinite ergodicity rate (single-state chains)
ALPHA_SENTINEL = 1e300
# a certified eigen-measure may deviate this much from stochastic before
# renormalization; beyond it the solution is rejected
ROW_SUM_GUARD = 1e-9


@dataclass(frozen=True, eq=False)
class EigenSolution:
    lambda_: float
    pi: np.ndarray
    eigen_transition: Optional[np.ndarray]
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        d = {
            "lambda": self.lambda_,
            "pi": self.pi.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }
        if self.eigen_transition is not None:
            d["eigen_transition"] = self.eigen_transition.tolist()
        return d


def _residuals(A, v, mu):
    Av = A @ v
    r = Av - mu * v
    sup = float(np.max(np.abs(r)) / np.max(np.abs(v)))
    # per-state relative residual controls the eigen-measure row sums
    per_state = float(np.max(np.abs(r) / (mu * v)))
    return sup, per_state, Av


def principal_eigen(model: MarkovPricingModel, tol: float = 1e-13, max_iter: int = 100_000) -> EigenSolution:
    """Perron root and positive eigenvector of the state-price matrix.

    Power iteration with a Rayleigh-quotient eigenvalue estimate and sup-norm
    renormalization at every step. Convergence is declared on the residual:
    both ``||A pi - mu pi||_inf / ||pi||_inf`` and the per-state relative
    residual must fall below ``tol``. Periodic matrices are iterated with a
    positive diagonal shift, which leaves the eigenvector unchanged.

    Returns
    -------
    EigenSolution
        ``pi`` normalized so ``pi[0] == 1``; ``lambda_ = -log(mu)``; the
        eigen-measure transition matrix is filled in.

    Raises
    ------
    ReducibleChain
        The support graph of ``A`` is not strongly connected.
    NoConvergence
        ``max_iter`` reached; the exception carries the last residual.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if not model.irreducible:
        raise ReducibleChain("pricing operator is reducible; the positive eigenvector is not unique")
    A = model.state_price
    n = model.n_states
    if n == 1:
        mu = float(A[0, 0])
        sol = EigenSolution(-math.log(mu), np.ones(1), None, 0.0, 0)
        return _attach_measure(model, sol)

    shift = 0.0
    if model.period > 1:
        shift = float(A.sum(axis=1).mean())
    B = A + shift * np.eye(n) if shift else A

    v = np.ones(n)
    res = per_state = math.inf
    for it in range(1, max_iter + 1):
        w = B @ v
        v = w / np.max(w)
        Av = A @ v
        mu = float(v @ Av) / float(v @ v)
        r = Av - mu * v
        res = float(np.max(np.abs(r)) / np.max(v))
        per_state = float(np.max(np.abs(r) / (mu * v)))
        if res <= tol and per_state <= tol:
            break
    else:
        raise NoConvergence(
            f"power iteration did not converge in {max_iter} iterations (residual {res:.3e})",
            residual=res,
            iterations=max_iter,
        )
    pi = v / v[0]
    res, _, _ = _residuals(A, pi, mu)
    sol = EigenSolution(-math.log(mu), pi, None, res, it)
    return _attach_measure(model, sol)


def _attach_measure(model, sol):
    Q = eigen_measure(model, sol)
    return replace(sol, eigen_transition=Q)


def eigen_measure(model: MarkovPricingModel, sol: EigenSolution) -> np.ndarray:
    """One-step transition matrix of the eigen-measure.

    ``Q(x, y) = exp(lam) A(x, y) pi(y) / pi(x)``. Row sums deviate from one
    by the per-state eigen residual; deviations up to ``1e-9`` are removed by
    dividing each row by its sum, larger ones raise :class:`InvalidSolution`.
    """
    A = model.state_price
    pi = np.asarray(sol.pi, dtype=float)
    if pi.shape != (model.n_states,) or np.any(pi <= 0):
        raise InvalidSolution("eigenvector must be strictly positive with one entry per state")
    Q = math.exp(sol.lambda_) * A * pi[None, :] / pi[:, None]
    sums = Q.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_GUARD):
        raise InvalidSolution(f"eigen-measure rows sum to {sums.tolist()}; residual too large")
    Q = Q / sums[:, None]
    Q.setflags(write=False)
    return Q


def hs_martingale(model: MarkovPricingModel, sol: EigenSolution, path) -> np.ndarray:
    """Eigen-martingale ``M_t = S_t exp(lam t) pi(X_t) / pi(X_0)`` along a path."""
    path = np.asarray(path, dtype=np.int64)
    if path.ndim != 1 or path.size == 0:
        raise ValidationError("path must be a non-empty state sequence")
    if np.any(path < 0) or np.any(path >= model.n_states):
        raise ValidationError("path contains an invalid state index")
    if path.size > 1 and np.any(model.transition[path[:-1], path[1:]] == 0):
        warnings.warn("path uses a zero-probability transition", InvalidPathWarning, stacklevel=2)
    t = np.arange(path.size)
    logM = path_log_sdf(model, path) + sol.lambda_ * t + np.log(sol.pi[path]) - np.log(sol.pi[path[0]])
    return np.exp(logM)


def recurrence_check(eigen_transition) -> bool:
    """True iff the finite chain is irreducible (equivalently recurrent)."""
    Q = np.asarray(eigen_transition, dtype=float)
    return _graph.is_irreducible(Q)


@dataclass(frozen=True, eq=False)
class ErgodicityCertificate:
    """Constants of the bound ``|E_x[f(X_t)/pi(X_t)] - c_f| <= c exp(-alpha t) / pi(x)``.

    The bound holds under the eigen-measure for every ``|f| <= 1``, every
    state ``x`` and every ``t`` in ``[t0, grid_t_max]``.
    """

    lambda_: float
    pi: np.ndarray
    stationary: np.ndarray
    alpha: float
    c: float
    t0: int
    spectral_gap: float
    J: float
    residual: float
    grid_t_max: int
    lambda2: complex = field(default=0j)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "pi": self.pi.tolist(),
            "stationary": self.stationary.tolist(),
            "alpha": self.alpha,
            "c": self.c,
            "t0": self.t0,
            "spectral_gap": self.spectral_gap,
            "residual": self.residual,
        }



def stationary_distribution(Q) -> np.ndarray:
    """Left Perron vector of an irreducible stochastic matrix."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    # replace one balance equation by the normalization
    M = Q.T - np.eye(n)
    M[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    p = np.linalg.solve(M, b)
    # one refinement step
    r = p @ Q - p
    M2 = Q.T - np.eye(n)
    M2[-1, :] = 1.0
    rhs = -r
    rhs[-1] = 1.0 - p.sum()
    p = p + np.linalg.solve(M2, rhs)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def deviation_powers(Q, stationary, t_max: int):
    """Yield ``(t, D**t)`` for ``t = 1..t_max`` with ``D = Q - 1 stationary``.

    ``Q**t - 1 stationary == D**t`` for ``t >= 1``. Powering ``D`` directly
    keeps full relative precision once the deviation falls below machine
    epsilon, where ``Q**t - 1 stationary`` would be pure rounding noise.
    """
    n = Q.shape[0]
    D = Q - np.outer(np.ones(n), stationary)
    Dt = np.eye(n)
    for t in range(1, t_max + 1):
        Dt = Dt @ D
        yield t, Dt


def certify_ergodicity(model: MarkovPricingModel, sol: EigenSolution, grid_t_max: int = 200) -> ErgodicityCertificate:
    """Fit exponential-ergodicity constants for the eigen-measure chain.

    ``alpha`` is the spectral gap ``-log|lambda_2|`` of the eigen-measure
    minus ``1e-9``; ``c`` is the smallest constant for which the bound holds
    on ``t = 1..grid_t_max``. For ``|f| <= 1`` the worst case of
    ``|sum_y (Q^t(x,y) - stationary(y)) f(y)/pi(y)|`` is attained at
    ``f(y) = sign(Q^t(x,y) - stationary(y))``, so the supremum over the whole
    unit ball is the weighted l1 norm of the deviation row, evaluated exactly.

    Raises
    ------
    NotRecurrent
        The eigen-measure chain is reducible.
    PeriodicChain
        The chain is periodic (``|lambda_2| = 1``).
    """
    if grid_t_max < 4:
        raise ValidationError("grid_t_max must be at least 4")
    Q = sol.eigen_transition if sol.eigen_transition is not None else eigen_measure(model, sol)
    if not recurrence_check(Q):
        raise NotRecurrent("eigen-measure chain is not irreducible")
    n = Q.shape[0]
    pi = np.asarray(sol.pi, dtype=float)
    if n == 1:
        return ErgodicityCertificate(
            sol.lambda_, pi, np.ones(1), ALPHA_SENTINEL, 0.0, 1, math.inf, float(1.0 / pi[0]),
            sol.residual, grid_t_max, 0j,
        )
    if _graph.period(Q) > 1:
        raise PeriodicChain("eigen-measure chain is periodic; no ergodicity certificate")
    eig = np.linalg.eigvals(Q)
    order = np.argsort(-np.abs(eig))
    lam2 = complex(eig[order[1]])
    mod2 = abs(lam2)
    if mod2 >= 1.0 - 1e-12:
        raise PeriodicChain(f"second eigenvalue modulus {mod2!r} equals one")
    gap = math.inf if mod2 == 0.0 else -math.log(mod2)
    alpha = ALPHA_SENTINEL if math.isinf(gap) else gap - ALPHA_MARGIN
    sta = stationary_distribution(Q)
    inv_pi = 1.0 / pi
    log_c = -math.inf
    for t, Dt in deviation_powers(Q, sta, grid_t_max):
        # per-state sup over |f| <= 1, times pi(x)
        worst = float(np.max((np.abs(Dt) @ inv_pi) * pi))
        if worst > 0 and not math.isinf(gap):
            log_c = max(log_c, math.log(worst) + alpha * t)
    c = math.exp(log_c) if log_c > -math.inf else 0.0
    J = float(sta @ inv_pi)
    return ErgodicityCertificate(sol.lambda_, pi, sta, alpha, c, 1, gap, J, sol.residual, grid_t_max, lam2)


def certificate_violations(sol: EigenSolution, cert: ErgodicityCertificate, t_max: Optional[int] = None) -> int:
    """Count ``(t, x)`` pairs on ``[t0, t_max]`` where the certified bound fails."""
    Q = sol.eigen_transition
    t_max = cert.grid_t_max if t_max is None else t_max
    inv_pi = 1.0 / cert.pi
    bad = 0
    for t, Dt in deviation_powers(Q, cert.stationary, t_max):
        if t < cert.t0:
            continue
        lhs = np.abs(Dt) @ inv_pi
        if cert.c == 0.0:
            bad += int(np.sum(lhs > 0))
            continue
        with np.errstate(divide="ignore"):
            log_lhs = np.log(lhs)
        log_rhs = math.log(cert.c) - cert.alpha * t - np.log(cert.pi)
        bad += int(np.sum(log_lhs > log_rhs + 1e-12))
    return bad


def long_term_pricing_check(
    model: MarkovPricingModel,
    sol: EigenSolution,
    cert: ErgodicityCertificate,
    f,
    t: int,
):
    """Compare ``A**t f`` with its long-term approximation ``c_f exp(-lam t) pi``.

    Returns ``(approx, exact, bound)`` with ``bound = c ||f||_inf
    exp(-(lam + alpha) t)``. The entrywise inequality is asserted; the
    comparison allows a rounding margin of ``64 eps`` times the magnitude of
    ``exact``, which is far below the bound on any horizon where the bound
    exceeds machine precision.

    Raises
    ------
    HorizonTooShort
        ``t < cert.t0``.
    """
    if isinstance(f, CashFlowSpec):
        fv = f.values
    else:
        fv = np.asarray(f, dtype=float)
    t = int(t)
    if t < cert.t0:
        raise HorizonTooShort(f"t={t} is below the certificate start t0={cert.t0}")
    pi = cert.pi
    c_f = float(cert.stationary @ (fv / pi))
    approx = c_f * math.exp(-sol.lambda_ * t) * pi
    exact = apply_pricing_operator(model, fv, t)
    sup_f = float(np.max(np.abs(fv)))
    bound = cert.c * sup_f * math.exp(-min((sol.lambda_ + cert.alpha) * t, 745.0))
    slack = 64 * np.finfo(float).eps * np.maximum(np.abs(exact), np.abs(approx))
    err = np.abs(exact - approx)
    if np.any(err > bound + slack):
        raise AssertionError(f"long-term pricing bound violated at t={t}: max error {err.max():.3e} > {bound:.3e}")
    return approx, exact, bound
