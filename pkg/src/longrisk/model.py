"""Finite-state Markov pricing models, growth indices, cash flows and curves.

A model is a row-stochastic transition matrix ``P`` together with one-period
discount factors ``s(x, y) = S_{t+1}/S_t`` on each transition. The state-price
matrix ``A = P * s`` (entrywise) is the one-period pricing operator, so the
``t``-period operator is the matrix power ``A**t``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import _graph
from .errors import (
    CurveTooShort,
    DimensionMismatch,
    NonPositiveCashFlow,
    NonPositiveGrowth,
    NonPositivePrice,
    NonPositiveSDF,
    NonStochasticRow,
    ParseError,
    StateOutOfRange,
    ValidationError,
)

ROW_SUM_ATOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _square(name, m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class MarkovPricingModel:
    """Validated pricing model; construct with :func:`build_model`."""

    transition: np.ndarray
    sdf: np.ndarray
    labels: Optional[tuple] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def state_price(self) -> np.ndarray:
        """State-price matrix ``A(x, y) = P(x, y) s(x, y)``."""
        A = self._cache.get("A")
        if A is None:
            A = np.where(self.transition > 0, self.transition * np.where(self.transition > 0, self.sdf, 0.0), 0.0)
            A.setflags(write=False)
            self._cache["A"] = A
        return A

    @property
    def log_sdf(self) -> np.ndarray:
        """Entrywise ``log s``; ``-inf`` on zero-probability transitions with no factor."""
        L = self._cache.get("log_sdf")
        if L is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                L = np.where(self.sdf > 0, np.log(np.where(self.sdf > 0, self.sdf, 1.0)), -np.inf)
            L.setflags(write=False)
            self._cache["log_sdf"] = L
        return L

    @property
    def irreducible(self) -> bool:
        """Reducible models are accepted but flagged here."""
        flag = self._cache.get("irreducible")
        if flag is None:
            flag = _graph.is_irreducible(self.state_price)
            self._cache["irreducible"] = flag
        return flag

    @property
    def period(self) -> int:
        if not self.irreducible:
            raise ValidationError("period is only defined for irreducible models")
        if "period" not in self._cache:
            self._cache["period"] = _graph.period(self.state_price)
        return self._cache["period"]

    def log_bond_table(self, t_max: int) -> np.ndarray:
        """``log P(tau, x)`` for ``tau = 0..t_max``, shape ``(t_max + 1, n)``.

        Computed by repeated application of ``A`` to the unit payoff with
        per-step rescaling, so long maturities do not underflow.
        """
        t_max = int(t_max)
        table = self._cache.get("log_bonds")
        if table is not None and table.shape[0] > t_max:
            return table[: t_max + 1]
        A = self.state_price
        out = np.empty((t_max + 1, self.n_states))
        v = np.ones(self.n_states)
        scale = 0.0
        out[0] = 0.0
        for tau in range(1, t_max + 1):
            v = A @ v
            m = v.max()
            v = v / m
            scale += np.log(m)
            out[tau] = np.log(v) + scale
        out.setflags(write=False)
        self._cache["log_bonds"] = out
        return out

    def check_state(self, x) -> int:
        x = int(x)
        if not 0 <= x < self.n_states:
            raise StateOutOfRange(f"state {x} outside 0..{self.n_states - 1}")
        return x

    def to_dict(self) -> dict:
        d = {
            "n_states": self.n_states,
            "transition": self.transition.tolist(),
            "sdf": self.sdf.tolist(),
        }
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d


def build_model(transition, sdf, labels: Optional[Sequence[str]] = None) -> MarkovPricingModel:
    """Validate ``transition`` and ``sdf`` and return a model.

    Raises
    ------
    DimensionMismatch
        Matrices are not square or have different sizes.
    NonStochasticRow
        A row of ``transition`` has a negative entry or does not sum to one
        within ``1e-12``. Rows are never renormalized.
    NonPositiveSDF
        ``sdf`` is not strictly positive on a transition with positive
        probability.
    """
    try:
        P = np.asarray(transition, dtype=float)
        s = np.asarray(sdf, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"matrices must be rectangular numeric arrays: {exc}") from None
    if P.ndim == 2 and P.shape[0] != P.shape[1]:
        # a non-square row set is reported as a row-sum problem if it is one
        sums = P.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_ATOL):
            raise NonStochasticRow(f"row sums {sums.tolist()} differ from 1")
    P = _square("transition", P)
    s = _square("sdf", s)
    if P.shape != s.shape:
        raise DimensionMismatch(f"transition {P.shape} and sdf {s.shape} differ in shape")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise NonStochasticRow("transition entries must be finite and nonnegative")
    dev = np.abs(P.sum(axis=1) - 1.0)
    if np.any(dev > ROW_SUM_ATOL):
        bad = int(np.argmax(dev))
        raise NonStochasticRow(f"row {bad} sums to {P[bad].sum()!r}")
    live = P > 0
    if np.any(~np.isfinite(s[live])) or np.any(s[live] <= 0):
        raise NonPositiveSDF("sdf must be finite and strictly positive on every reachable transition")
    if labels is not None:
        labels = tuple(str(v) for v in labels)
        if len(labels) != P.shape[0]:
            raise DimensionMismatch("labels must have one entry per state")
    return MarkovPricingModel(_frozen(P), _frozen(s), labels)


def apply_pricing_operator(model: MarkovPricingModel, f, t: int) -> np.ndarray:
    """Return ``A**t f``, the time-0 value of the payoff ``f(X_t)`` per initial state."""
    f = np.asarray(f, dtype=float)
    if f.shape != (model.n_states,):
        raise DimensionMismatch(f"payoff must have length {model.n_states}")
    if not np.all(np.isfinite(f)):
        raise ValidationError("payoff must be finite")
    t = int(t)
    if t < 0:
        raise ValidationError("t must be nonnegative")
    A = model.state_price
    out = f.copy()
    for _ in range(t):
        out = A @ out
    return out


def bond_price(model: MarkovPricingModel, t: int, x: int) -> float:
    """Zero-coupon bond price ``P(t, x) = E_x[S_t]``."""
    x = model.check_state(x)
    if int(t) < 0:
        raise ValidationError("t must be nonnegative")
    return float(np.exp(model.log_bond_table(t)[int(t), x]))


@dataclass(frozen=True, eq=False)
class GrowthSpec:
    """One-period growth factors ``g(x, y) = G_{t+1}/G_t`` with ``G_0 = 1``."""

    growth: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "growth", _frozen(_square("growth", self.growth)))


def growth_indexed_model(model: MarkovPricingModel, growth: GrowthSpec) -> MarkovPricingModel:
    """Model with one-period factors ``s(x, y) g(x, y)`` and the same transitions."""
    if not isinstance(growth, GrowthSpec):
        growth = GrowthSpec(growth)
    g = growth.growth
    if g.shape != model.sdf.shape:
        raise DimensionMismatch(f"growth {g.shape} does not match model {model.sdf.shape}")
    live = model.transition > 0
    if np.any(~np.isfinite(g[live])) or np.any(g[live] <= 0):
        raise NonPositiveGrowth("growth factors must be strictly positive on reachable transitions")
    return build_model(model.transition, model.sdf * g, model.labels)


@dataclass(frozen=True, eq=False)
class CashFlowSpec:
    """Horizon payoff ``C_T = f(X_T)`` stored as its value per state."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DimensionMismatch("cash flow must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise NonPositiveCashFlow("cash flow must be finite")
        if np.any(v <= 0):
            raise NonPositiveCashFlow("cash flow must be strictly positive in every state")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, payoff: Callable[[int], float], n_states: int) -> "CashFlowSpec":
        return cls([payoff(x) for x in range(n_states)])

    def __call__(self, x):
        return self.values[x]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class DiscountCurve:
    """Zero-coupon prices ``P_0^T`` on a strictly increasing tenor grid."""

    tenors: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.tenors, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        if T.ndim != 1 or T.shape != p.shape:
            raise DimensionMismatch("tenors and prices must be vectors of equal length")
        if T.size < 4:
            raise CurveTooShort(f"need at least 4 curve points, got {T.size}")
        if not np.all(np.isfinite(T)) or np.any(T <= 0) or np.any(np.diff(T) <= 0):
            raise ValidationError("tenors must be positive and strictly increasing")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise NonPositivePrice("curve prices must be strictly positive")
        if np.any(p > p[0]):
            raise ValidationError("curve prices may not exceed the first price")
        object.__setattr__(self, "tenors", _frozen(T))
        object.__setattr__(self, "prices", _frozen(p))

    @classmethod
    def from_function(cls, price: Callable[[np.ndarray], np.ndarray], tenors) -> "DiscountCurve":
        T = np.asarray(tenors, dtype=float)
        return cls(T, price(T))


def path_log_sdf(model: MarkovPricingModel, path) -> np.ndarray:
    """``log S_t`` along ``path`` for ``t = 0..len(path) - 1``."""
    path = np.asarray(path, dtype=np.int64)
    steps = model.log_sdf[path[:-1], path[1:]]
    return np.concatenate(([0.0], np.cumsum(steps)))


def path_sdf(model: MarkovPricingModel, path) -> np.ndarray:
    """Pricing kernel ``S_t`` along a path (product of one-period factors)."""
    return np.exp(path_log_sdf(model, path))


# -- file formats -----------------------------------------------------------

def model_from_dict(d: dict) -> tuple[MarkovPricingModel, Optional[GrowthSpec]]:
    try:
        n = int(d["n_states"])
        transition = d["transition"]
        sdf = d["sdf"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"model file missing or malformed key: {exc}") from None
    model = build_model(transition, sdf, d.get("labels"))
    if model.n_states != n:
        raise DimensionMismatch(f"n_states={n} but matrices are {model.n_states}x{model.n_states}")
    growth = GrowthSpec(d["growth"]) if d.get("growth") is not None else None
    if growth is not None:
        growth_indexed_model(model, growth)  # validate early
    return model, growth


def load_model(path) -> tuple[MarkovPricingModel, Optional[GrowthSpec]]:
    """Read a model JSON file (keys ``n_states``, ``transition``, ``sdf``,
    optional ``growth`` and ``labels``)."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ParseError("model file must contain a JSON object")
    return model_from_dict(d)


def save_model(model: MarkovPricingModel, path, growth: Optional[GrowthSpec] = None) -> None:
    d = model.to_dict()
    if growth is not None:
        d["growth"] = growth.growth.tolist()
    Path(path).write_text(json.dumps(d, indent=2) + "\n")


def load_curve(path) -> DiscountCurve:
    """Read a CSV curve with header ``tenor,price``."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(row for row in fh if not row.startswith("#"))
            if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["tenor", "price"]:
                raise ParseError(f"curve file {path} must have header 'tenor,price'")
            rows = [(float(r["tenor"]), float(r["price"])) for r in reader]
    except OSError as exc:
        raise ParseError(f"cannot read curve file {path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad number in curve file {path}: {exc}") from None
    if not rows:
        raise CurveTooShort("curve file has no rows")
    T, p = zip(*rows)
    return DiscountCurve(T, p)


def save_curve(curve: DiscountCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tenor", "price"])
        for T, p in zip(curve.tenors, curve.prices):
            w.writerow([f"{T:.17g}", f"{p:.17g}"])


# -- reference models -------------------------------------------------------

def one_state(rate: float = 0.05) -> MarkovPricingModel:
    """Deterministic kernel ``S_t = exp(-rate t)``."""
    return build_model([[1.0]], [[np.exp(-rate)]])


def fixture2() -> MarkovPricingModel:
    """Two-state model with short rates 1% and 5%."""
    P = [[0.9, 0.1], [0.2, 0.8]]
    s = [[np.exp(-0.01)] * 2, [np.exp(-0.05)] * 2]
    return build_model(P, s)


def random_model(n: int, seed: int, density: float = 0.6, rate_scale: float = 0.08) -> MarkovPricingModel:
    """Random irreducible aperiodic model.

    A Hamiltonian cycle plus self-loops guarantees irreducibility and
    aperiodicity; remaining edges are kept with probability ``density``.
    SDF factors are ``exp(-r)`` with ``r`` uniform on ``[0, rate_scale]``.
    """
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    perm = rng.permutation(n)
    mask[perm, np.roll(perm, -1)] = True
    mask[np.arange(n), np.arange(n)] = True
    W = np.where(mask, rng.random((n, n)) + 0.05, 0.0)
    P = W / W.sum(axis=1, keepdims=True)
    # exact row sums
    P[np.arange(n), np.argmax(P, axis=1)] += 1.0 - P.sum(axis=1)
    sdf = np.exp(-rate_scale * rng.random((n, n)))
    return build_model(P, sdf)
