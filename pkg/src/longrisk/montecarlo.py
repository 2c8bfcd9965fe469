"""Seeded path simulation, estimators and the Alvarez-Jermann checks.

Uniforms come from Philox streams keyed by ``SeedSequence(seed,
spawn_key=(block,))``, one stream per block of ``BLOCK`` paths. Path ``i``
therefore depends only on ``(seed, i)`` and the horizon, and blocks can be
generated independently.
"""
from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .eigen import EigenSolution, principal_eigen
from .errors import (
    EmptyBundle,
    HorizonExceedsT,
    NotStabilized,
    ParseError,
    ValidationError,
)
from .longterm import ForwardSystem, _BondGap, forward_system
from .model import MarkovPricingModel

BLOCK = 65536
GENERATOR_ID = f"numpy.random.Philox/SeedSequence(seed,spawn_key=(block,))/block={BLOCK}"
DUMP_MAGIC = b"LRPB"
DUMP_VERSION = 1
AJ_OSCILLATION_TOL = 1e-6
AJ_SAFETY = 1.01

_QT = re.compile(r"^QT\((\d+)\)$")


@dataclass(frozen=True, eq=False)
class PathBundle:
    seed: int
    measure_tag: str
    n_paths: int
    horizon: int
    x0: int
    states: np.ndarray
    weights: Optional[np.ndarray] = None
    model: Optional[MarkovPricingModel] = field(default=None, repr=False)
    matrices: Optional[np.ndarray] = field(default=None, repr=False)

    def weights_check(self) -> bool:
        """Mean weight within three standard errors of one."""
        if self.weights is None:
            return True
        w = self.weights
        se = w.std(ddof=1) / np.sqrt(w.size) if w.size > 1 else 0.0
        return bool(abs(w.mean() - 1.0) <= 3.0 * se + 1e-12)

    def config(self) -> dict:
        return {
            "seed": self.seed,
            "measure": self.measure_tag,
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "x0": self.x0,
            "weighted": self.weights is not None,
        }

    def metadata(self) -> dict:
        cfg = self.config()
        blob = json.dumps(cfg, sort_keys=True).encode()
        if self.model is not None:
            blob += json.dumps(self.model.to_dict(), sort_keys=True).encode()
        return {
            "seed": self.seed,
            "generator": GENERATOR_ID,
            "measure": self.measure_tag,
            "config": cfg,
            "config_hash": hashlib.sha256(blob).hexdigest(),
            "states_sha256": hashlib.sha256(np.ascontiguousarray(self.states, dtype="<i4").tobytes()).hexdigest(),
        }


def parse_measure(tag: str):
    """Split a measure tag into ``(kind, T)`` with ``kind`` in ``P``, ``L``, ``QT``."""
    if tag in ("P", "L"):
        return tag, None
    m = _QT.match(tag)
    if m:
        return "QT", int(m.group(1))
    raise ValidationError(f"unknown measure {tag!r}; expected P, L or QT(T)")


def uniforms(seed: int, n_paths: int, horizon: int) -> np.ndarray:
    """``(n_paths, horizon)`` uniforms from per-block Philox streams."""
    out = np.empty((n_paths, horizon))
    for b, start in enumerate(range(0, n_paths, BLOCK)):
        stop = min(start + BLOCK, n_paths)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))
        out[start:stop] = rng.random((stop - start, horizon))
    return out


def measure_matrices(model: MarkovPricingModel, measure: str, horizon: int, sol: Optional[EigenSolution] = None):
    """Transition matrices ``(K, n, n)`` of ``X`` under ``measure``."""
    kind, T = parse_measure(measure)
    if kind == "P":
        return np.asarray(model.transition)[None]
    if kind == "L":
        sol = sol if sol is not None else principal_eigen(model)
        return np.asarray(sol.eigen_transition)[None]
    if horizon > T:
        raise HorizonExceedsT(f"horizon {horizon} exceeds the forward maturity T={T}")
    return np.asarray(forward_system(model, T).forward_transitions[:horizon])


def simulate(
    source: Union[MarkovPricingModel, ForwardSystem],
    measure: str,
    x0: int,
    horizon: int,
    n_paths: int,
    seed: int,
    sol: Optional[EigenSolution] = None,
) -> PathBundle:
    """Simulate ``n_paths`` chains of length ``horizon`` from ``x0``.

    Parameters
    ----------
    source : MarkovPricingModel or ForwardSystem
        A forward system fixes the measure to its own ``QT(T)``.
    measure : str
        ``"P"``, ``"L"`` (the eigen-measure) or ``"QT(T)"``.
    sol : EigenSolution, optional
        Used for ``L``; computed when omitted.
    """
    if isinstance(source, ForwardSystem):
        model = source.model
        if measure in (None, "QT"):
            measure = f"QT({source.T})"
    else:
        model = source
    horizon, n_paths, seed = int(horizon), int(n_paths), int(seed)
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    if n_paths < 1:
        raise ValidationError("n_paths must be at least 1")
    x0 = model.check_state(x0)
    if isinstance(source, ForwardSystem):
        kind, T = parse_measure(measure)
        if kind != "QT" or T != source.T:
            raise ValidationError("a forward system simulates only its own QT(T) measure")
        if horizon > T:
            raise HorizonExceedsT(f"horizon {horizon} exceeds the forward maturity T={T}")
        mats = np.asarray(source.forward_transitions[:horizon])
    else:
        mats = measure_matrices(model, measure, horizon, sol)
    states = _kernels.sample_paths(_kernels.cumulative_rows(mats), x0, uniforms(seed, n_paths, horizon))
    states.setflags(write=False)
    return PathBundle(seed, measure, n_paths, horizon, x0, states, None, model, mats)


def path_log_likelihood(states, mats) -> np.ndarray:
    """``sum_s log mats[s](X_s, X_{s+1})`` per path (``-inf`` off support)."""
    states = np.asarray(states)
    H = states.shape[1] - 1
    K = mats.shape[0]
    steps = np.arange(H) if K > 1 else np.zeros(H, dtype=np.int64)
    with np.errstate(divide="ignore"):
        logm = np.log(mats)
    return logm[steps[None, :], states[:, :-1], states[:, 1:]].sum(axis=1)


def reweight(bundle: PathBundle, target: str, sol: Optional[EigenSolution] = None) -> PathBundle:
    """Attach likelihood-ratio weights so ``bundle`` estimates under ``target``."""
    if bundle.model is None or bundle.matrices is None:
        raise ValidationError("bundle carries no model to reweight against")
    tgt = measure_matrices(bundle.model, target, bundle.horizon, sol)
    llr = path_log_likelihood(bundle.states, tgt) - path_log_likelihood(bundle.states, bundle.matrices)
    w = np.exp(llr)
    w.setflags(write=False)
    return PathBundle(bundle.seed, bundle.measure_tag, bundle.n_paths, bundle.horizon, bundle.x0,
                      bundle.states, w, bundle.model, bundle.matrices)


def estimate(bundle: PathBundle, functional: Callable[[np.ndarray], np.ndarray]):
    """Sample mean and standard error of ``functional(states)``.

    With weights the mean is self-normalized, ``sum w v / sum w``, and the
    standard error comes from the delta method.
    """
    states = bundle.states
    if states.shape[0] == 0:
        raise EmptyBundle("bundle holds no paths")
    v = np.asarray(functional(states), dtype=float)
    if v.shape != (states.shape[0],):
        raise ValidationError("functional must return one value per path")
    N = v.size
    if bundle.weights is None:
        mean = float(v.mean())
        se = float(v.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
        return mean, se
    w = bundle.weights
    sw = w.sum()
    mean = float(w @ v / sw)
    se = float(np.sqrt(np.sum((w * (v - mean)) ** 2)) / sw)
    return mean, se


# -- functionals --------------------------------------------------------------

def state_functional(f, t: int):
    """``f(X_t)``."""
    f = np.asarray(f, dtype=float)
    return lambda states: f[states[:, t]]


def sdf_functional(model: MarkovPricingModel, t: int):
    """``S_t``."""
    logs = model.log_sdf
    return lambda states: np.exp(logs[states[:, :t], states[:, 1 : t + 1]].sum(axis=1))


def forward_martingale_functional(model: MarkovPricingModel, T: int, t: int):
    """``M_t^T = S_t P(T - t, X_t) / P(T, X_0)``."""
    if t > T:
        raise ValidationError("need t <= T")
    logP = model.log_bond_table(T)
    logs = model.log_sdf

    def value(states):
        ls = logs[states[:, :t], states[:, 1 : t + 1]].sum(axis=1)
        return np.exp(ls + logP[T - t, states[:, t]] - logP[T, states[:, 0]])

    return value


def eigen_martingale_functional(model: MarkovPricingModel, sol: EigenSolution, t: int):
    """``M_t^inf = S_t exp(lam t) pi(X_t) / pi(X_0)``."""
    logs = model.log_sdf
    logpi = np.log(sol.pi)

    def value(states):
        ls = logs[states[:, :t], states[:, 1 : t + 1]].sum(axis=1)
        return np.exp(ls + sol.lambda_ * t + logpi[states[:, t]] - logpi[states[:, 0]])

    return value


def martingale_gap_functional(model: MarkovPricingModel, sol: EigenSolution, T: int, t: int):
    """``|M_t^T - M_t^inf|``, evaluated without cancellation."""
    if t >= T:
        raise ValidationError("need t < T")
    gaps = _BondGap(sol, T)
    tables = {}
    logs = model.log_sdf

    def value(states):
        out = np.empty(states.shape[0])
        for x0 in np.unique(states[:, 0]):
            if x0 not in tables:
                tables[x0] = gaps.table(T, int(x0), t)[t]
            sel = states[:, 0] == x0
            st = states[sel]
            ls = logs[st[:, :t], st[:, 1 : t + 1]].sum(axis=1)
            out[sel] = np.exp(ls) * np.abs(tables[x0][st[:, t]])
        return out

    return value


# -- path dumps ---------------------------------------------------------------

def write_paths(bundle_or_states, path) -> None:
    """Binary dump: ``LRPB``, uint32 version, uint32 rows, uint32 cols, int32 row-major."""
    states = bundle_or_states.states if isinstance(bundle_or_states, PathBundle) else bundle_or_states
    states = np.ascontiguousarray(states, dtype="<i4")
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC + struct.pack("<I", DUMP_VERSION))
        fh.write(struct.pack("<II", *states.shape))
        fh.write(states.tobytes())


def read_paths(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:4] != DUMP_MAGIC:
            raise ParseError(f"{path}: not a path dump")
        (version,) = struct.unpack("<I", head[4:8])
        if version != DUMP_VERSION:
            raise ParseError(f"{path}: unsupported dump version {version}")
        rows, cols = struct.unpack("<II", head[8:16])
        data = np.frombuffer(fh.read(), dtype="<i4")
    if data.size != rows * cols:
        raise ParseError(f"{path}: truncated dump")
    return data.reshape(rows, cols).astype(np.int32)


# -- Alvarez-Jermann ------------------------------------------------------------

@dataclass(eq=False)
class AJCheckReport:
    lambda_used: float
    t_grid: list
    sup_discounted_bond: np.ndarray  # (len(t_grid), n)
    dominating: np.ndarray
    dominating_integrable: bool
    limit_exists: bool
    tau_grid_max: int
    oscillation: np.ndarray
    limit_values: np.ndarray

    @property
    def passed(self) -> bool:
        return self.limit_exists and self.dominating_integrable

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_used,
            "t_grid": list(self.t_grid),
            "tau_grid_max": self.tau_grid_max,
            "limit_exists": self.limit_exists,
            "dominating_integrable": self.dominating_integrable,
            "oscillation": self.oscillation.tolist(),
            "limit_values": self.limit_values.tolist(),
            "sup_discounted_bond": self.sup_discounted_bond.tolist(),
            "dominating": self.dominating.tolist(),
        }


def max_log_sdf(model: MarkovPricingModel, x0: int, t_max: int) -> np.ndarray:
    """``max log S_t`` over positive-probability paths from ``x0`` ending in each state.

    Row ``t`` of the ``(t_max + 1, n)`` result; ``-inf`` marks unreachable states.
    """
    logs = np.where(np.asarray(model.transition) > 0, model.log_sdf, -np.inf)
    out = np.full((t_max + 1, model.n_states), -np.inf)
    out[0, x0] = 0.0
    for t in range(t_max):
        out[t + 1] = np.max(out[t][:, None] + logs, axis=0)
    return out


def aj_check(model: MarkovPricingModel, sol: EigenSolution, t_grid, tau_max: int = 100, x0: int = 0) -> AJCheckReport:
    """Check the Alvarez-Jermann conditions on a finite chain.

    (i) ``exp(lam tau) P(tau, x)`` has a positive finite limit: accepted when
    its relative oscillation over the trailing half of ``0..tau_max`` is at
    most ``1e-6`` in every state.

    (ii) ``exp(lam (t + tau)) S_t P(tau, X_t)`` is dominated: on a finite chain
    the supremum over paths and ``tau`` is a finite maximum, which is reported
    per ``(t, X_t)`` and inflated by 1% to give the dominating variable.

    Raises
    ------
    NotStabilized
        If (i) is inconclusive at ``tau_max``; the partial report is attached.
    """
    tau_max = int(tau_max)
    if tau_max < 2:
        raise ValidationError("tau_max must be at least 2")
    t_grid = sorted({int(t) for t in t_grid})
    if not t_grid or t_grid[0] < 0:
        raise ValidationError("t_grid must hold nonnegative integers")
    x0 = model.check_state(x0)
    lam = sol.lambda_
    logP = model.log_bond_table(tau_max)
    taus = np.arange(tau_max + 1)
    scaled = np.exp(lam * taus[:, None] + logP)
    tail = scaled[tau_max // 2 :]
    osc = (tail.max(axis=0) - tail.min(axis=0)) / np.abs(tail[-1])
    limit_exists = bool(np.all(osc <= AJ_OSCILLATION_TOL))

    best_tau = np.max(lam * taus[:, None] + logP, axis=0)
    paths = max_log_sdf(model, x0, t_grid[-1])
    with np.errstate(over="ignore"):
        sup = np.exp(lam * np.asarray(t_grid)[:, None] + paths[t_grid] + best_tau[None, :])
    dominating = AJ_SAFETY * sup
    integrable = bool(np.all(np.isfinite(dominating)))
    report = AJCheckReport(lam, t_grid, sup, dominating, integrable, limit_exists, tau_max, osc, scaled[-1])
    if not limit_exists:
        raise NotStabilized(
            f"discounted bond prices still oscillate by {osc.max():.3g} over the trailing half of tau <= {tau_max}",
            report=report,
        )
    return report
