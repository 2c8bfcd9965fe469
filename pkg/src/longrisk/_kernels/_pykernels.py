"""Pure numpy kernels, used when the compiled extension is unavailable."""
import numpy as np


def sample_paths(cum, x0, u):
    """Map uniforms to Markov chain paths by inverse-CDF sampling.

    Parameters
    ----------
    cum : (K, n, n) float64
        Cumulative transition rows; ``K == 1`` for a time-homogeneous chain,
        otherwise one matrix per step.
    x0 : int
        Start state.
    u : (N, H) float64
        Uniforms on ``[0, 1)``.

    Returns
    -------
    (N, H + 1) int32
        Sampled states; the next state is the first ``y`` with
        ``u < cum[x, y]``.
    """
    cum = np.asarray(cum, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    N, H = u.shape
    K = cum.shape[0]
    out = np.empty((N, H + 1), dtype=np.int32)
    out[:, 0] = x0
    x = np.full(N, x0, dtype=np.int64)
    for s in range(H):
        rows = cum[0 if K == 1 else s][x]
        x = np.sum(rows <= u[:, s, None], axis=1)
        out[:, s + 1] = x
    return out


def strategy_gains(states, incr, weights, strategies, a_grid, num_threads=1):
    """Gains of bounded predictable strategies against one integrator.

    For each strategy ``k`` the position at step ``s`` (``1 <= s <= H``) is
    ``strategies[k, s - 1, X_{s-1}]``, so it is fixed before the increment
    ``incr[:, s - 1]`` is revealed. Returns weighted sums over paths of
    ``min(1, |G_H|)``, its square, and the indicators
    ``sup_s |G_s| > a`` for each ``a`` in ``a_grid``.
    """
    states = np.asarray(states)
    incr = np.asarray(incr, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    strategies = np.asarray(strategies)
    a_grid = np.asarray(a_grid, dtype=np.float64)
    K, H, _ = strategies.shape
    steps = np.arange(H)[None, :]
    prev = states[:, :-1]
    trunc = np.empty(K)
    trunc_sq = np.empty(K)
    exceed = np.empty((K, a_grid.size))
    for k in range(K):
        eta = strategies[k][steps, prev]
        G = np.cumsum(eta * incr, axis=1)
        v = np.minimum(1.0, np.abs(G[:, -1]))
        trunc[k] = w @ v
        trunc_sq[k] = w @ (v * v)
        sup = np.abs(G).max(axis=1)
        exceed[k] = w @ (sup[:, None] > a_grid[None, :])
    return trunc, trunc_sq, exceed
