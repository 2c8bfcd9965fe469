"""Long-term yields on bonds, bounded cash flows and growing cash flows.

Model-mode yields are exact: every conditional expectation is a row of a
matrix power, evaluated in log space with per-step rescaling so long
horizons neither underflow nor lose relative precision. Curve mode works
from a supplied discount curve alone; there ``log P`` between tenors comes
from a cubic spline in the tenor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .eigen import EigenSolution, principal_eigen
from .errors import (
    CurveTooShort,
    HorizonOrder,
    MomentBoundsViolation,
    NotPowerDecay,
    ReducibleGrowthChain,
    ValidationError,
)
from .model import CashFlowSpec, DiscountCurve, GrowthSpec, MarkovPricingModel, growth_indexed_model

POWER_LAMBDA_TOL = 1e-6
POWER_SPREAD_TOL = 0.05
EXPONENTIAL_MIN_SCORE = 0.9


# -- curve mode ---------------------------------------------------------------

@dataclass(frozen=True)
class KaramataFit:
    lambda_: float
    L_values: np.ndarray
    regularity_score: float
    decay_class: str  # "Exponential", "Power" or "Undetermined"
    gamma: Optional[float] = None
    tail_lambdas: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        d = {"lambda": self.lambda_}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        d["L_values"] = np.asarray(self.L_values).tolist()
        d["regularity_score"] = self.regularity_score
        d["decay_class"] = self.decay_class
        return d


def curve_log_price(curve: DiscountCurve):
    """Cubic spline of ``log P_0^T`` in ``T``, exact at the tenors."""
    return CubicSpline(curve.tenors, np.log(curve.prices))


def karamata_fit(curve: DiscountCurve, t_probe: Optional[float] = None) -> KaramataFit:
    """Split a discount curve into an exponential rate and a slowly varying part.

    Per tenor ``T`` in the last quartile (by index) the local rate is
    ``lam_T = log(P_0^{T - t_probe} / P_0^T) / t_probe``. A slowly varying
    factor biases ``lam_T`` by terms of order ``1/T``, so the rate estimate is
    the intercept of a least-squares fit of ``lam_T`` on ``(1, 1/T, 1/T^2)``.

    Parameters
    ----------
    curve : DiscountCurve
        At least 8 tenors spanning a factor of 10 or more.
    t_probe : float, optional
        Probe lag; defaults to a tenth of the span and must be below half of it.

    Returns
    -------
    KaramataFit
        ``L_values`` are ``exp(lam T) P_0^T`` at every tenor. The regularity
        score is one minus the coefficient of variation of
        ``exp(t_probe lam_T)`` over the tail. The curve is ``Power`` when the
        rate is below 1e-6 and ``-log P / log T`` is stable over the tail
        (spread below 5%), ``Exponential`` when the rate is positive and the
        score reaches 0.9.
    """
    T = np.asarray(curve.tenors, dtype=float)
    P = np.asarray(curve.prices, dtype=float)
    if T.size < 8:
        raise CurveTooShort(f"need at least 8 tenors, got {T.size}")
    if T[-1] < 10.0 * T[0]:
        raise CurveTooShort("tenors must span a factor of at least 10")
    span = T[-1] - T[0]
    if t_probe is None:
        t_probe = span / 10.0
    t_probe = float(t_probe)
    if not 0.0 < t_probe < span / 2.0:
        raise ValidationError("t_probe must be positive and below half the tenor span")
    logP = curve_log_price(curve)
    tail = T[(3 * T.size) // 4 :]
    tail = tail[tail - t_probe >= T[0]]
    if tail.size < 2:
        raise CurveTooShort("tail quartile too short for the probe lag")
    lam_T = (logP(tail - t_probe) - logP(tail)) / t_probe
    k = min(3, tail.size)
    design = np.vander(1.0 / tail, k, increasing=True)
    lam = float(np.linalg.lstsq(design, lam_T, rcond=None)[0][0])
    if abs(lam) < 1e-13:
        lam = 0.0
    r = np.exp(t_probe * lam_T)
    score = float(np.clip(1.0 - r.std() / r.mean(), 0.0, 1.0))
    L_values = np.exp(lam * T + np.log(P))

    gamma = None
    decay = "Undetermined"
    if abs(lam) <= POWER_LAMBDA_TOL:
        big = tail[tail > 1.0]
        if big.size >= 2:
            ratios = -logP(big) / np.log(big)
            spread = (ratios.max() - ratios.min()) / abs(ratios[-1])
            if ratios[-1] > 0 and spread <= POWER_SPREAD_TOL:
                gamma = float(ratios[-1])
                decay = "Power"
    elif lam > 0 and score >= EXPONENTIAL_MIN_SCORE:
        decay = "Exponential"
    return KaramataFit(lam, L_values, score, decay, gamma, lam_T)


def power_yield(
    curve: DiscountCurve,
    t: float,
    T: float,
    m1: float = 1.0,
    m2: float = 1.0,
    moment_bounds: Optional[tuple] = None,
    t_probe: Optional[float] = None,
    fit: Optional[KaramataFit] = None,
) -> float:
    """Expected power yield of a cash flow on a power-decay curve.

    ``m1`` is ``E_t[C_T]`` and ``m2`` the normalized moment
    ``E_t[C_T/pi_T] / E_t[1/pi_T]``; the value of the claim is then
    ``m2 P_t^T`` and

        varrho_{t,T} = (log m1 - log m2 - log(P_0^T / P_0^t)) / log(T - t).

    ``C = 1`` gives ``m1 = m2 = 1``. Supplied moments must lie inside
    ``moment_bounds = (lo, hi)``; bounds are required whenever a moment
    differs from one.

    Raises
    ------
    NotPowerDecay
        If the curve is not classified as power decay.
    MomentBoundsViolation
        If a moment is outside ``moment_bounds`` or bounds are missing.
    """
    t, T = float(t), float(T)
    if T - t <= 1.0:
        raise HorizonOrder("power yield needs T - t > 1")
    fit = fit if fit is not None else karamata_fit(curve, t_probe)
    if fit.decay_class != "Power":
        raise NotPowerDecay(f"curve decay class is {fit.decay_class}, not Power")
    _check_moments(m1, m2, moment_bounds)
    logP = curve_log_price(curve)
    lp_T = _log_price_at(curve, logP, T)
    lp_t = 0.0 if t == 0 else _log_price_at(curve, logP, t)
    return float((np.log(m1) - np.log(m2) - (lp_T - lp_t)) / np.log(T - t))


def _log_price_at(curve, spline, T):
    if T < curve.tenors[0] or T > curve.tenors[-1]:
        raise ValidationError(f"maturity {T} lies outside the curve's tenor range")
    return float(spline(T))


def _check_moments(m1, m2, bounds):
    for m in (m1, m2):
        if not np.isfinite(m) or m <= 0:
            raise MomentBoundsViolation("moments must be positive and finite")
    if bounds is None:
        if m1 != 1.0 or m2 != 1.0:
            raise MomentBoundsViolation("moment bounds are required with supplied moments")
        return
    lo, hi = bounds
    if not 0 < lo < hi < np.inf:
        raise MomentBoundsViolation("moment bounds must satisfy 0 < lo < hi < inf")
    for m in (m1, m2):
        if not lo <= m <= hi:
            raise MomentBoundsViolation(f"moment {m} outside [{lo}, {hi}]")


# -- model mode ---------------------------------------------------------------

def log_power_table(M, f, tau_max: int) -> np.ndarray:
    """``log(M^tau f)`` for ``tau = 0..tau_max`` (rows), with positive ``f``."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(f, dtype=float).copy()
    out = np.empty((tau_max + 1, v.size))
    scale = 0.0
    out[0] = np.log(v)
    for tau in range(1, tau_max + 1):
        v = M @ v
        m = v.max()
        v /= m
        scale += np.log(m)
        out[tau] = np.log(v) + scale
    return out


def _tau(t, T):
    t, T = int(t), int(T)
    if t < 0:
        raise ValidationError("t must be nonnegative")
    if T <= t:
        raise HorizonOrder(f"need T > t, got t={t}, T={T}")
    return T - t


def _payoff(C, n):
    if isinstance(C, CashFlowSpec):
        v = C.values
    else:
        v = CashFlowSpec(np.asarray(C, dtype=float)).values
    if v.size != n:
        raise ValidationError(f"cash flow has {v.size} entries for {n} states")
    return v


def zero_coupon_rate(model: MarkovPricingModel, sol: Optional[EigenSolution], t: int, T: int, x: int) -> float:
    """``-log P(T - t, x) / (T - t)``; time-homogeneity makes ``t`` enter only via ``T - t``."""
    tau = _tau(t, T)
    x = model.check_state(x)
    return float(-model.log_bond_table(tau)[tau, x] / tau)


def forward_rate(model: MarkovPricingModel, tau: int, x: int) -> float:
    """One-period forward rate ``log P(tau, x) - log P(tau + 1, x)``."""
    tau = int(tau)
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    x = model.check_state(x)
    logP = model.log_bond_table(tau + 1)
    return float(logP[tau, x] - logP[tau + 1, x])


def exp_yield(model: MarkovPricingModel, sol: EigenSolution, C, t: int, T: int, x: int):
    """Expected exponential yields of ``C_T = C(X_T)`` under the long forward measure and ``P``.

    ``rho = log(E_t[C_T] / V_t(C_T)) / (T - t)`` where ``V_t`` is the price
    ``(A^{T-t} C)(x)``; ``E^L`` uses the eigen-measure transitions.

    Returns
    -------
    (rho_L, rho_P) : tuple of float
    """
    tau = _tau(t, T)
    x = model.check_state(x)
    c = _payoff(C, model.n_states)
    log_price = log_power_table(model.state_price, c, tau)[tau, x]
    log_L = log_power_table(sol.eigen_transition, c, tau)[tau, x]
    log_P = log_power_table(model.transition, c, tau)[tau, x]
    return float((log_L - log_price) / tau), float((log_P - log_price) / tau)


def growth_yield(
    model: MarkovPricingModel,
    growth: GrowthSpec,
    t: int,
    T: int,
    x: int,
    measure: str = "L",
    sol: Optional[EigenSolution] = None,
) -> float:
    """Exponential yield on the growing cash flow ``G_T``.

    ``measure="L"``
        ``lam + log(E^P[S G pi_T / pi_t] / E^P[S G]) / (T - t)``, using powers of
        the growth-indexed state-price matrix ``A^G`` with and without the
        ``pi`` weight. Tends to ``lam``.
    ``measure="P"``
        ``-log V_t(G_T) / (T - t)`` with ``V_t(G_T) = (A^G)^{T-t} 1``, the
        yield priced off the growth-indexed kernel. Tends to ``lam^G``, the
        rate of ``A^G``.
    ``measure="P-expected"``
        ``log(E^P[G_T] / V_t(G_T)) / (T - t)``.
    """
    tau = _tau(t, T)
    x = model.check_state(x)
    gm = growth_indexed_model(model, growth)
    if not gm.irreducible:
        raise ReducibleGrowthChain("growth-indexed state-price matrix is reducible")
    AG = gm.state_price
    ones = np.ones(model.n_states)
    log_price = log_power_table(AG, ones, tau)[tau, x]
    if measure == "L":
        sol = sol if sol is not None else principal_eigen(model)
        log_num = log_power_table(AG, sol.pi, tau)[tau, x] - np.log(sol.pi[x])
        return float(sol.lambda_ + (log_num - log_price) / tau)
    if measure == "P":
        return float(-log_price / tau)
    if measure == "P-expected":
        PG = np.asarray(model.transition) * np.asarray(growth.growth)
        return float((log_power_table(PG, ones, tau)[tau, x] - log_price) / tau)
    raise ValidationError(f"unknown measure {measure!r}")


def growth_limits(model: MarkovPricingModel, growth: GrowthSpec) -> dict:
    """Limits of :func:`growth_yield` from spectral radii.

    ``L`` tends to ``lam``; ``P`` to ``lam^G = -log rho(A^G)``; ``P-expected``
    to ``lam^G + log rho(P * g)``.
    """
    gm = growth_indexed_model(model, growth)
    if not gm.irreducible:
        raise ReducibleGrowthChain("growth-indexed state-price matrix is reducible")
    lam = principal_eigen(model).lambda_
    lam_G = principal_eigen(gm).lambda_
    PG = np.asarray(model.transition) * np.asarray(growth.growth)
    growth_rate = float(np.log(np.max(np.abs(np.linalg.eigvals(PG)))))
    return {"L": lam, "P": lam_G, "P-expected": lam_G + growth_rate}


# -- sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class YieldReport:
    t: int
    horizons: list
    rho_L: np.ndarray
    rho_P: np.ndarray
    varrho: Optional[np.ndarray]
    limit_estimate: float
    limit_target: float
    gap_at_max: float

    def rows(self):
        for i, T in enumerate(self.horizons):
            rho_P = self.rho_P[i] if self.rho_P is not None else float("nan")
            rho_L = self.rho_L[i] if self.rho_L is not None else self.varrho[i]
            yield T, rho_L, rho_P, self.limit_target, abs(rho_L - self.limit_target)


def _extrapolate(horizons, values, t):
    """Intercept of ``values`` regressed on ``(1, 1/(T - t))``."""
    h = np.asarray(horizons, dtype=float) - t
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v[-1])
    design = np.column_stack([np.ones_like(h), 1.0 / h])
    return float(np.linalg.lstsq(design, v, rcond=None)[0][0])


def yield_sweep(
    model: MarkovPricingModel,
    sol: EigenSolution,
    C,
    t: int,
    horizons: Sequence[int],
    x: int = 0,
) -> YieldReport:
    """Exponential yields over a horizon grid, targeting ``lam``."""
    horizons = [int(T) for T in horizons]
    if not horizons:
        raise ValidationError("horizons must not be empty")
    pairs = [exp_yield(model, sol, C, t, T, x) for T in horizons]
    rho_L = np.array([p[0] for p in pairs])
    rho_P = np.array([p[1] for p in pairs])
    target = sol.lambda_
    return YieldReport(
        int(t), horizons, rho_L, rho_P, None,
        _extrapolate(horizons, rho_L, t), target, float(abs(rho_L[-1] - target)),
    )


def power_yield_sweep(curve: DiscountCurve, t: float, horizons, t_probe=None) -> YieldReport:
    """Power yields of ``C = 1`` over a horizon grid, targeting the fitted ``gamma``."""
    fit = karamata_fit(curve, t_probe)
    if fit.decay_class != "Power":
        raise NotPowerDecay(f"curve decay class is {fit.decay_class}, not Power")
    vals = np.array([power_yield(curve, t, T, fit=fit) for T in horizons])
    h = np.log(np.asarray(horizons, dtype=float) - t)
    design = np.column_stack([np.ones_like(h), 1.0 / h])
    limit = float(np.linalg.lstsq(design, vals, rcond=None)[0][0]) if vals.size > 1 else float(vals[-1])
    return YieldReport(t, list(horizons), None, None, vals, limit, fit.gamma, float(abs(vals[-1] - fit.gamma)))
