"""Forward measures, roll-over strategies, the long bond and convergence diagnostics.

The ``T``-forward martingale is ``M_t^T = S_t P(T - t, X_t) / P(T, X_0)``. On a
finite chain the ``T``-forward measure is again Markov, with time-dependent
transitions ``A(x, y) P(T - u - 1, y) / P(T - u, x)``. Rolling over
``T``-maturity bonds extends ``M^T`` beyond ``T``. As ``T`` grows, ``M^T``
converges to the eigen-martingale and the roll-over value ``B^T`` to the long
bond ``exp(lam t) pi(X_t) / pi(X_0)``, which :func:`convergence_report`
quantifies.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .eigen import EigenSolution, hs_martingale, stationary_distribution
from .errors import EnumerationTooLarge, HorizonOrder, HorizonZero, ValidationError
from .model import MarkovPricingModel, path_log_sdf

MAX_ATOMS = 10**6
EXHAUSTIVE_SIGN_STEPS = 10
N_RANDOM_SIGNS = 512
BURKHOLDER_CONSTANT = 18.0


@dataclass(frozen=True, eq=False)
class ForwardSystem:
    model: MarkovPricingModel
    T: int
    log_bonds: np.ndarray
    forward_transitions: np.ndarray

    def bond(self, tau: int, x: int) -> float:
        return float(np.exp(self.log_bonds[tau, x]))


def forward_system(model: MarkovPricingModel, T: int) -> ForwardSystem:
    """Transition matrices of ``X`` under the ``T``-forward measure.

    ``forward_transitions[u]`` governs the step ``u -> u + 1`` for
    ``u = 0..T-1``.
    """
    T = int(T)
    if T < 1:
        raise HorizonZero("forward measure needs T >= 1")
    logP = model.log_bond_table(T)
    A = model.state_price
    F = np.empty((T, model.n_states, model.n_states))
    for u in range(T):
        ratio = np.exp(logP[T - u - 1][None, :] - logP[T - u][:, None])
        F[u] = A * ratio
    F.setflags(write=False)
    return ForwardSystem(model, T, logP, F)


def _check_path(model, path, t):
    path = np.asarray(path, dtype=np.int64)
    if path.ndim != 1 or path.size < t + 1:
        raise ValidationError(f"path must contain at least t + 1 = {t + 1} states")
    if np.any(path < 0) or np.any(path >= model.n_states):
        raise ValidationError("path contains an invalid state index")
    return path


def mtT_on_path(model: MarkovPricingModel, T: int, path, t: int) -> float:
    """``M_t^T = S_t P(T - t, X_t) / P(T, X_0)`` along ``path`` for ``t <= T``."""
    t, T = int(t), int(T)
    if t > T:
        raise HorizonOrder(f"t={t} exceeds the maturity T={T}")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    path = _check_path(model, path, t)
    logP = model.log_bond_table(T)
    logS = path_log_sdf(model, path[: t + 1])[t]
    return float(np.exp(logS + logP[T - t, path[t]] - logP[T, path[0]]))


def rollover_value(model: MarkovPricingModel, T: int, path, t: int) -> float:
    """Value at ``t`` of one unit invested at 0 and rolled over ``T``-maturity bonds.

    For ``t`` in ``[kT, (k+1)T)``: the reciprocal product of the bond prices
    ``P(T, X_{iT})`` paid at the start of legs ``i = 0..k``, times the price
    ``P((k+1)T - t, X_t)`` of the bond currently held.
    """
    t, T = int(t), int(T)
    if T < 1:
        raise HorizonZero("roll-over interval must be at least 1")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    path = _check_path(model, path, t)
    logP = model.log_bond_table(T)
    k = t // T
    legs = path[np.arange(k + 1) * T]
    return float(np.exp(-logP[T, legs].sum() + logP[(k + 1) * T - t, path[t]]))


def extended_martingale(model: MarkovPricingModel, T: int, path, t: int) -> float:
    """``S_t B_t^T``, the forward martingale extended past ``T`` by rolling over."""
    path = _check_path(model, path, int(t))
    return float(np.exp(path_log_sdf(model, path[: int(t) + 1])[int(t)])) * rollover_value(model, T, path, t)


def long_bond(model: MarkovPricingModel, sol: EigenSolution, path, t: int) -> float:
    """Long bond ``B_t = exp(lam t) pi(X_t) / pi(X_0)``."""
    t = int(t)
    path = _check_path(model, path, t)
    return float(math.exp(sol.lambda_ * t) * sol.pi[path[t]] / sol.pi[path[0]])


def factorization_check(model: MarkovPricingModel, sol: EigenSolution, path, t: int):
    """Compare ``S_t`` with ``exp(-lam t) (pi(X_0)/pi(X_t)) M_t``.

    Returns ``(lhs, rhs, gap)`` with ``gap = |lhs - rhs| / lhs``.
    """
    t = int(t)
    path = _check_path(model, path, t)
    seg = path[: t + 1]
    lhs = float(np.exp(path_log_sdf(model, seg)[t]))
    M = hs_martingale(model, sol, seg)[t]
    rhs = math.exp(-sol.lambda_ * t) * (sol.pi[seg[0]] / sol.pi[seg[t]]) * M
    return lhs, float(rhs), abs(lhs - rhs) / lhs


# -- enumeration ------------------------------------------------------------

def count_paths(P, x0: int, t: int) -> float:
    """Number of positive-probability paths of length ``t`` from ``x0``."""
    adj = (np.asarray(P) > 0).astype(float)
    v = np.zeros(adj.shape[0])
    v[x0] = 1.0
    for _ in range(t):
        v = v @ adj
    return float(v.sum())


def enumerate_paths(P, x0: int, t: int):
    """All positive-probability paths ``x0, X_1, .., X_t`` and their probabilities.

    Returns ``(states, probs)`` with ``states`` of shape ``(M, t + 1)``.
    """
    P = np.asarray(P, dtype=float)
    states = np.full((1, 1), x0, dtype=np.int32)
    probs = np.ones(1)
    for _ in range(t):
        last = states[:, -1]
        succ = P[last] > 0
        rows, cols = np.nonzero(succ)
        states = np.hstack([states[rows], cols[:, None].astype(np.int32)])
        probs = probs[rows] * P[last[rows], cols]
    return states, probs


# -- convergence ------------------------------------------------------------

class _BondGap:
    """``B_s^T - B_s^inf`` evaluated without cancellation.

    With ``h_tau = Q^tau (1/pi)`` under the eigen-measure, bond prices are
    ``P(tau, y) = exp(-lam tau) pi(y) h_tau(y)``, hence

        B_s^T - B_s^inf = exp(lam s) pi(y)/pi(x0) (h_{T-s}(y) - h_T(x0)) / h_T(x0).

    ``h_tau - J`` equals ``D^tau (1/pi)`` with ``D = Q - 1 stationary``, which
    is iterated directly so the difference keeps full relative precision even
    when it is far below machine epsilon.
    """

    def __init__(self, sol: EigenSolution, tau_max: int):
        Q = sol.eigen_transition
        self.sol = sol
        w = 1.0 / sol.pi
        sta = stationary_distribution(Q)
        self.J = float(sta @ w)
        d = np.empty((tau_max + 1, w.size))
        d[0] = w - self.J
        for tau in range(1, tau_max + 1):
            prev = d[tau - 1]
            d[tau] = Q @ prev - sta @ prev
        self.d = d

    def table(self, T: int, x0: int, t: int) -> np.ndarray:
        """Gap for ``s = 0..t`` (rows) and ``y`` (columns)."""
        sol = self.sol
        d = self.d
        hT = self.J + d[T, x0]
        s = np.arange(t + 1)
        diff = d[T - s] - d[T, x0]
        scale = np.exp(sol.lambda_ * s)[:, None] * (sol.pi[None, :] / sol.pi[x0])
        return scale * diff / hT


def _sign_strategies(t: int, n: int, seed: int) -> np.ndarray:
    """Deterministic bounded strategies: sign sequences plus stopping windows.

    All sign sequences with a leading +1 (negation leaves ``|gains|``
    unchanged) for ``t <= 10``, otherwise ``N_RANDOM_SIGNS`` seeded random
    sequences; plus the windows ``1_[0, s]`` for ``s = 1..t``.
    """
    if t <= EXHAUSTIVE_SIGN_STEPS:
        seqs = np.array([(1,) + p for p in product((1, -1), repeat=t - 1)], dtype=np.int8)
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(7,))))
        seqs = rng.choice(np.array([1, -1], dtype=np.int8), size=(N_RANDOM_SIGNS, t))
        seqs[0] = 1
    windows = np.tril(np.ones((t, t), dtype=np.int8))  # row s-1 holds 1 on steps 1..s
    seqs = np.vstack([seqs, windows])
    return np.ascontiguousarray(np.repeat(seqs[:, :, None], n, axis=2))


def _stopped_gains(G, weights, n_levels=64):
    """Best ``E[1 ^ |G_tau|]`` over first-passage times ``tau_c = inf{s: |G_s| >= c} ^ t``.

    ``eta = 1_[0, tau_c]`` is predictable, so each level ``c`` is an admissible
    strategy. Returns ``(value, value_sq)`` for the best level.
    """
    absG = np.abs(G)
    levels = np.unique(np.quantile(absG[:, 1:].max(axis=1), np.linspace(0.0, 1.0, n_levels)))
    best, best_sq = 0.0, 0.0
    last = G.shape[1] - 1
    for c in levels:
        hit = absG >= c
        tau = np.where(hit.any(axis=1), np.argmax(hit, axis=1), last)
        v = np.minimum(1.0, absG[np.arange(G.shape[0]), tau])
        val = float(weights @ v)
        if val > best:
            best, best_sq = val, float(weights @ (v * v))
    return best, best_sq


@dataclass(eq=False)
class ConvergenceReport:
    horizons: list
    l1_M: np.ndarray
    ucp_B: np.ndarray
    emery_lb: np.ndarray
    tv_Q: np.ndarray
    fitted_rate: float
    t_fixed: int
    n_paths: int
    seed: int
    x0: int = 0
    lambda_: float = float("nan")
    mode: str = "exact"
    emery_lb_M: Optional[np.ndarray] = None
    stderr: dict = field(default_factory=dict)

    @property
    def l1_decaying(self) -> bool:
        """True when ``l1_M`` shrinks along the horizons (or is identically zero)."""
        l1 = np.asarray(self.l1_M)
        if np.all(l1 == 0):
            return True
        return bool(self.fitted_rate > 0 and l1[-1] < l1[0])

    def emery_upper_bound_M(self) -> np.ndarray:
        """Burkholder-implied bound ``min(1, 2 sqrt(18 l1))`` on the martingale Emery term."""
        return np.minimum(1.0, 2.0 * np.sqrt(BURKHOLDER_CONSTANT * np.asarray(self.l1_M)))

    def rows(self):
        for i, T in enumerate(self.horizons):
            flag = "exact" if self.mode == "exact" else f"mc:se_l1={self.stderr['l1_M'][i]:.3g}"
            yield T, self.l1_M[i], self.ucp_B[i], self.emery_lb[i], self.tv_Q[i], flag

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "t_fixed": self.t_fixed,
            "x0": self.x0,
            "mode": self.mode,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "horizons": list(self.horizons),
            "l1_M": np.asarray(self.l1_M).tolist(),
            "ucp_B": np.asarray(self.ucp_B).tolist(),
            "emery_lb": np.asarray(self.emery_lb).tolist(),
            "tv_Q": np.asarray(self.tv_Q).tolist(),
            "emery_lb_M": None if self.emery_lb_M is None else np.asarray(self.emery_lb_M).tolist(),
            "fitted_rate": self.fitted_rate,
            "stderr": {k: np.asarray(v).tolist() for k, v in self.stderr.items()},
        }


def fit_decay_rate(horizons, values) -> float:
    """Negated least-squares slope of ``log(values)`` against ``horizons``."""
    h = np.asarray(horizons, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(h[keep], np.log(v[keep]), 1)[0]
    return float(-slope)


def convergence_report(
    model: MarkovPricingModel,
    sol: EigenSolution,
    t_fixed: int,
    horizons: Sequence[int],
    n_paths: int = 10_000,
    seed: int = 0,
    x0: int = 0,
    max_atoms: int = MAX_ATOMS,
) -> ConvergenceReport:
    """Distances between the ``T``-forward objects and their long-term limits on ``F_t``.

    For each ``T`` in ``horizons`` and ``t = t_fixed``:

    * ``l1_M``  ``E|M_t^T - M_t^inf|``
    * ``tv_Q``  total variation ``sum over atoms |Q^T - L|``; it equals
      ``l1_M`` because both measures have densities ``M^T`` and ``M^inf``
      with respect to ``P`` on ``F_t``
    * ``ucp_B`` ``E[1 ^ max_{s<=t} |B_s^T - B_s^inf|]`` (window ``[0, t]``)
    * ``emery_lb`` largest ``E[1 ^ |sum_s eta_s d(B^T - B^inf)_s|]`` over
      deterministic sign sequences, fixed windows and first-passage stopping
      rules, a lower bound on the Emery distance restricted to ``[0, t]``

    Expectations are exact sums over the atoms of ``F_t`` (paths from ``x0``)
    when there are at most ``max_atoms`` of them, and Monte Carlo averages
    over ``n_paths`` paths under ``P`` otherwise (``mode == "mc"``).
    """
    t = int(t_fixed)
    horizons = [int(T) for T in horizons]
    if t < 1:
        raise ValidationError("t_fixed must be at least 1")
    if not horizons or min(horizons) <= t:
        raise HorizonOrder("every horizon must exceed t_fixed")
    if list(horizons) != sorted(set(horizons)):
        raise ValidationError("horizons must be strictly increasing")
    x0 = model.check_state(x0)
    P = model.transition
    mode = "exact"
    if count_paths(P, x0, t) <= max_atoms:
        states, weights = enumerate_paths(P, x0, t)
    else:
        warnings.warn(
            f"more than {max_atoms} atoms on F_{t}; using Monte Carlo with {n_paths} paths",
            EnumerationTooLarge,
            stacklevel=2,
        )
        from .montecarlo import simulate

        if n_paths < 1000:
            raise ValidationError("Monte Carlo mode needs n_paths >= 1000")
        bundle = simulate(model, "P", x0, t, n_paths, seed)
        states = bundle.states
        weights = np.full(states.shape[0], 1.0 / states.shape[0])
        mode = "mc"
    N = states.shape[0]
    logS = np.hstack([np.zeros((N, 1)), np.cumsum(model.log_sdf[states[:, :-1], states[:, 1:]], axis=1)])
    S = np.exp(logS)
    gaps = _BondGap(sol, max(horizons))
    strategies = _sign_strategies(t, model.n_states, seed)
    s_idx = np.arange(t + 1)[None, :]

    l1 = np.empty(len(horizons))
    ucp = np.empty(len(horizons))
    emery = np.empty(len(horizons))
    emery_M = np.empty(len(horizons))
    se = {k: np.zeros(len(horizons)) for k in ("l1_M", "ucp_B", "emery_lb")}
    for i, T in enumerate(horizons):
        G = gaps.table(T, x0, t)[s_idx, states]  # (N, t+1), B^T - B^inf on each path
        absM = S[:, t] * np.abs(G[:, t])
        l1[i] = weights @ absM
        u = np.minimum(1.0, np.abs(G).max(axis=1))
        ucp[i] = weights @ u
        trunc, trunc_sq, _ = _kernels.strategy_gains(states, np.diff(G, axis=1), weights, strategies, np.empty(0))
        k = int(np.argmax(trunc))
        best, best_sq = trunc[k], trunc_sq[k]
        stop, stop_sq = _stopped_gains(G, weights)
        if stop > best:
            best, best_sq = stop, stop_sq
        emery[i] = best
        NM = S * G  # M^T - M^inf
        trunc_M, _, _ = _kernels.strategy_gains(states, np.diff(NM, axis=1), weights, strategies, np.empty(0))
        emery_M[i] = trunc_M.max()
        if mode == "mc":
            se["l1_M"][i] = absM.std(ddof=1) / math.sqrt(N)
            se["ucp_B"][i] = u.std(ddof=1) / math.sqrt(N)
            var = max(best_sq - best**2, 0.0)
            se["emery_lb"][i] = math.sqrt(var * N / (N - 1) / N)
    return ConvergenceReport(
        horizons=horizons,
        l1_M=l1,
        ucp_B=ucp,
        emery_lb=emery,
        tv_Q=l1.copy(),
        fitted_rate=fit_decay_rate(horizons, l1),
        t_fixed=t,
        n_paths=N if mode == "mc" else 0,
        seed=int(seed),
        x0=x0,
        lambda_=sol.lambda_,
        mode=mode,
        emery_lb_M=emery_M,
        stderr=se if mode == "mc" else {},
    )


def l1_martingale_gap(model: MarkovPricingModel, sol: EigenSolution, T: int, t: int, x0: int = 0) -> float:
    """Exact ``E_x0|M_t^T - M_t^inf|``.

    ``|M^T - M^inf|`` depends on the path only through ``S_t`` and ``X_t``, so
    the expectation collapses to ``sum_y A^t(x0, y) |B_t^T(y) - B_t^inf(y)|``.
    """
    if t >= T:
        raise HorizonOrder("need t < T")
    gaps = _BondGap(sol, T)
    g = gaps.table(T, x0, t)[t]
    row = np.zeros(model.n_states)
    row[x0] = 1.0
    for _ in range(t):
        row = row @ model.state_price
    return float(row @ np.abs(g))


@dataclass(eq=False)
class BurkholderReport:
    T: int
    t: int
    a_grid: np.ndarray
    lhs: np.ndarray  # (K, len(a_grid)): a * P(sup_s |int eta dN| > a)
    stderr: np.ndarray
    l1: float
    n_paths: int

    @property
    def rhs(self) -> float:
        return BURKHOLDER_CONSTANT * self.l1

    @property
    def violations(self) -> int:
        return int(np.sum(self.lhs > self.rhs + 3.0 * self.stderr))


def burkholder_check(
    model: MarkovPricingModel,
    sol: EigenSolution,
    T: int,
    t: int,
    n_paths: int = 100_000,
    seed: int = 0,
    n_strategies: int = 100,
    a_grid=(0.01, 0.1, 1.0),
    x0: int = 0,
) -> BurkholderReport:
    """Check ``a P(sup_s |int_0^s eta d(M^T - M^inf)| > a) <= 18 E|M_t^T - M_t^inf|``.

    Strategies are random predictable sign tables ``eta_s = table[s, X_{s-1}]``;
    probabilities are estimated from ``n_paths`` paths simulated under ``P``
    and compared with the exact ``l1`` gap plus three standard errors.
    """
    from .montecarlo import simulate

    T, t = int(T), int(t)
    if t >= T:
        raise HorizonOrder("need t < T")
    a_grid = np.asarray(a_grid, dtype=float)
    bundle = simulate(model, "P", x0, t, n_paths, seed)
    states = bundle.states
    N = states.shape[0]
    logS = np.hstack([np.zeros((N, 1)), np.cumsum(model.log_sdf[states[:, :-1], states[:, 1:]], axis=1)])
    gaps = _BondGap(sol, T)
    G = gaps.table(T, x0, t)[np.arange(t + 1)[None, :], states]
    NM = np.exp(logS) * G
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(11,))))
    strategies = rng.choice(np.array([1, -1], dtype=np.int8), size=(n_strategies, t, model.n_states))
    weights = np.full(N, 1.0 / N)
    _, _, exceed = _kernels.strategy_gains(states, np.diff(NM, axis=1), weights, strategies, a_grid)
    # weighted sums of indicators can round past 1
    exceed = np.clip(exceed, 0.0, 1.0)
    lhs = a_grid[None, :] * exceed
    stderr = a_grid[None, :] * np.sqrt(exceed * (1.0 - exceed) / N)
    l1 = l1_martingale_gap(model, sol, T, t, x0)
    return BurkholderReport(T, t, a_grid, lhs, stderr, l1, N)
