# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Contracts match auglm._kernels._fallback; see that module for semantics.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def gather_sum(offsets, targets, h):
    cdef cnp.int64_t[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.int64_t[::1] tgts = np.ascontiguousarray(targets, dtype=np.int64)
    cdef cnp.float64_t[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef Py_ssize_t n = offs.shape[0] - 1
    cdef Py_ssize_t d = hv.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t v, j, k
    cdef cnp.int64_t u
    for v in range(n):
        for j in range(offs[v], offs[v + 1]):
            u = tgts[j]
            for k in range(d):
                out[v, k] += hv[u, k]
    return out_arr


def ppr_power(offsets, targets, source, double alpha, double tol, long long max_iter):
    cdef cnp.int64_t[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.int64_t[::1] tgts = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t n = offs.shape[0] - 1
    cdef Py_ssize_t src = source
    inv_deg_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] inv_deg = inv_deg_arr
    cdef Py_ssize_t v, j
    cdef cnp.int64_t deg
    for v in range(n):
        deg = offs[v + 1] - offs[v]
        if deg > 0:
            inv_deg[v] = 1.0 / deg
    r_arr = np.zeros(n, dtype=np.float64)
    nxt_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] r = r_arr
    cdef cnp.float64_t[::1] nxt = nxt_arr
    r[src] = 1.0
    cdef double diff = 0.0
    cdef double acc, beta = 1.0 - alpha
    cdef long long it
    cdef cnp.float64_t[::1] tmp
    for it in range(1, max_iter + 1):
        for v in range(n):
            if offs[v + 1] == offs[v]:
                acc = r[v]  # virtual self-loop keeps the mass in place
            else:
                acc = 0.0
            for j in range(offs[v], offs[v + 1]):
                acc += r[tgts[j]] * inv_deg[tgts[j]]
            nxt[v] = beta * acc
        nxt[src] += alpha
        diff = 0.0
        for v in range(n):
            acc = nxt[v] - r[v]
            diff += acc if acc >= 0.0 else -acc
        tmp = r
        r = nxt
        nxt = tmp
        if diff <= tol:
            out = np.asarray(r).copy()
            return out, int(it), diff
    return np.asarray(r).copy(), int(max_iter), diff


def ppr_push(offsets, targets, source, double alpha, double epsilon):
    cdef cnp.int64_t[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.int64_t[::1] tgts = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t n = offs.shape[0] - 1
    p_arr = np.zeros(n, dtype=np.float64)
    res_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] p = p_arr
    cdef cnp.float64_t[::1] res = res_arr
    queue_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = queue_arr
    in_queue_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] in_queue = in_queue_arr
    cdef Py_ssize_t src = source
    cdef Py_ssize_t head = 0, size = 0
    cdef Py_ssize_t u, v, j
    cdef cnp.int64_t deg_u, deg_v
    cdef double mass, spread, thresh
    res[src] = 1.0
    deg_u = offs[src + 1] - offs[src]
    thresh = epsilon * (deg_u if deg_u > 0 else 1)
    if res[src] >= thresh:
        queue[0] = src
        size = 1
        in_queue[src] = 1
    while size > 0:
        u = queue[head]
        head = (head + 1) % n
        size -= 1
        in_queue[u] = 0
        mass = res[u]
        deg_u = offs[u + 1] - offs[u]
        thresh = epsilon * (deg_u if deg_u > 0 else 1)
        if mass <= 0.0 or mass < thresh:
            continue
        if deg_u == 0:
            p[u] += mass  # self-loop geometric series sums to the full mass
            res[u] = 0.0
            continue
        p[u] += alpha * mass
        res[u] = 0.0
        spread = (1.0 - alpha) * mass / deg_u
        for j in range(offs[u], offs[u + 1]):
            v = tgts[j]
            res[v] += spread
            if not in_queue[v]:
                deg_v = offs[v + 1] - offs[v]
                if res[v] >= epsilon * (deg_v if deg_v > 0 else 1):
                    queue[(head + size) % n] = v
                    size += 1
                    in_queue[v] = 1
    return p_arr, res_arr
