"""Hot path kernels with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it imports; set
``LONGRISK_PURE_PYTHON=1`` to force the numpy implementation.
``LONGRISK_THREADS`` caps the threads used by the compiled strategy kernel.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("LONGRISK_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def threads():
    try:
        n = int(os.environ.get("LONGRISK_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def cumulative_rows(P):
    """Row-wise cumulative sums prepared for inverse-CDF sampling.

    Entries from the last positive-probability column onwards are set to 2 so
    rounding in the cumulative sum can never select an impossible state.
    """
    P = np.asarray(P, dtype=np.float64)
    mats = P[None] if P.ndim == 2 else P
    cum = np.cumsum(mats, axis=2)
    n = mats.shape[2]
    last = n - 1 - np.argmax(mats[:, :, ::-1] > 0, axis=2)
    cols = np.arange(n)[None, None, :]
    cum = np.where(cols >= last[:, :, None], 2.0, cum)
    return np.ascontiguousarray(cum)


def sample_paths(cum, x0, u, backend=None):
    impl = _select(backend)
    return impl.sample_paths(np.ascontiguousarray(cum, dtype=np.float64), int(x0),
                             np.ascontiguousarray(u, dtype=np.float64))


def strategy_gains(states, incr, weights, strategies, a_grid, backend=None):
    impl = _select(backend)
    return impl.strategy_gains(
        np.ascontiguousarray(states, dtype=np.int32),
        np.ascontiguousarray(incr, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(strategies, dtype=np.int8),
        np.ascontiguousarray(a_grid, dtype=np.float64),
        threads(),
    )


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if BACKEND != "cython":
            raise ImportError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
