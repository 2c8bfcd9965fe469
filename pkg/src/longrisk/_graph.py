"""Support-graph helpers for nonnegative square matrices."""
from math import gcd

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components


def support(matrix, atol=0.0):
    return np.asarray(matrix) > atol


def is_irreducible(matrix):
    """True iff the directed graph of positive entries is strongly connected."""
    mask = support(matrix)
    n = mask.shape[0]
    if n == 1:
        return True
    n_comp, _ = connected_components(csr_matrix(mask), directed=True, connection="strong")
    return n_comp == 1


def period(matrix):
    """Period of an irreducible nonnegative matrix (gcd of cycle lengths).

    Uses BFS levels from state 0: the period is the gcd of
    ``level[u] + 1 - level[v]`` over all edges ``u -> v``.
    """
    mask = support(matrix)
    n = mask.shape[0]
    order, pred = breadth_first_order(csr_matrix(mask), 0, directed=True)
    if len(order) != n:
        raise ValueError("period is defined for irreducible matrices only")
    level = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    d = 0
    rows, cols = np.nonzero(mask)
    for u, v in zip(rows, cols):
        d = gcd(d, int(abs(level[u] + 1 - level[v])))
        if d == 1:
            break
    return d
