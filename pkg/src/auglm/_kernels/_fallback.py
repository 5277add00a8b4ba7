"""Pure NumPy/SciPy implementations of the hot kernels.

Semantics are shared with the compiled backend:

- ``gather_sum``: per-node sum of neighbor rows under a CSR adjacency.
- ``ppr_power``: power iteration for r = alpha*q + (1-alpha) * A D^-1 r,
  where degree-0 nodes get a virtual self-loop inside the normalization.
- ``ppr_push``: residual-push approximation of the same fixed point with the
  per-degree residual guarantee max_u r(u)/max(deg(u),1) < epsilon.
"""

from collections import deque

import numpy as np
import scipy.sparse as sp

BACKEND = "fallback"


def _degrees(offsets: np.ndarray) -> np.ndarray:
    return np.diff(offsets)


def gather_sum(offsets: np.ndarray, targets: np.ndarray, h: np.ndarray) -> np.ndarray:
    n = offsets.shape[0] - 1
    h = np.ascontiguousarray(h, dtype=np.float64)
    if targets.size == 0:
        return np.zeros_like(h)
    data = np.ones(targets.shape[0], dtype=np.float64)
    adj = sp.csr_matrix((data, targets, offsets), shape=(n, n))
    return adj @ h


def ppr_power(
    offsets: np.ndarray,
    targets: np.ndarray,
    source: int,
    alpha: float,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, int, float]:
    n = offsets.shape[0] - 1
    deg = _degrees(offsets).astype(np.float64)
    inv_deg = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    # Column-stochastic transition in row-gather form: entry (u, v) for
    # v in N(u) carries weight 1/deg(v); degree-0 nodes self-loop.
    data = inv_deg[targets]
    mat = sp.csr_matrix((data, targets, offsets), shape=(n, n))
    zero_deg = (deg == 0).astype(np.float64)
    q = np.zeros(n, dtype=np.float64)
    q[source] = 1.0
    r = q.copy()
    diff = np.inf
    for it in range(1, max_iter + 1):
        r_new = alpha * q + (1.0 - alpha) * (mat @ r + zero_deg * r)
        diff = float(np.abs(r_new - r).sum())
        r = r_new
        if diff <= tol:
            return r, it, diff
    return r, max_iter, diff


def ppr_push(
    offsets: np.ndarray,
    targets: np.ndarray,
    source: int,
    alpha: float,
    epsilon: float,
) -> tuple[np.ndarray, np.ndarray]:
    n = offsets.shape[0] - 1
    deg = _degrees(offsets)
    p = np.zeros(n, dtype=np.float64)
    res = np.zeros(n, dtype=np.float64)
    res[source] = 1.0

    def above(u: int) -> bool:
        return res[u] >= epsilon * max(int(deg[u]), 1)

    queue: deque[int] = deque()
    in_queue = np.zeros(n, dtype=bool)
    if above(source):
        queue.append(source)
        in_queue[source] = True
    while queue:
        u = queue.popleft()
        in_queue[u] = False
        mass = res[u]
        if mass <= 0.0 or not above(u):
            continue
        d = int(deg[u])
        if d == 0:
            # Virtual self-loop: the whole residual settles on u.
            p[u] += mass
            res[u] = 0.0
            continue
        p[u] += alpha * mass
        res[u] = 0.0
        spread = (1.0 - alpha) * mass / d
        for v in targets[offsets[u] : offsets[u + 1]]:
            res[v] += spread
            if not in_queue[v] and above(v):
                queue.append(v)
                in_queue[v] = True
    return p, res
