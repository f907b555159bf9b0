# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grouped-aggregation kernels.

One pass over the input rows updates every aggregate accumulator, so the
per-row group id and validity loads are shared across aggregates and no
hash map is involved (group ids are already dense slots).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

OP_SUM = 0
OP_MIN = 1
OP_MAX = 2

cdef int C_SUM = 0
cdef int C_MIN = 1
cdef int C_MAX = 2


def fused_group_agg_f64(cnp.int64_t[::1] gids, Py_ssize_t n_groups,
                        cnp.float64_t[:, ::1] values,
                        cnp.uint8_t[:, ::1] valid,
                        cnp.int32_t[::1] ops):
    cdef Py_ssize_t n = gids.shape[0]
    cdef Py_ssize_t m = values.shape[0]
    out_arr = np.zeros((m, n_groups), dtype=np.float64)
    nn_arr = np.zeros((m, n_groups), dtype=np.int64)
    rc_arr = np.zeros(n_groups, dtype=np.int64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef cnp.int64_t[:, ::1] nn = nn_arr
    cdef cnp.int64_t[::1] rc = rc_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t g
    cdef cnp.float64_t v
    cdef cnp.int32_t op

    for i in range(m):
        if ops[i] == OP_MIN:
            for j in range(n_groups):
                out[i, j] = np.inf
        elif ops[i] == OP_MAX:
            for j in range(n_groups):
                out[i, j] = -np.inf

    with nogil:
        for j in range(n):
            g = gids[j]
            rc[g] += 1
            for i in range(m):
                if valid[i, j]:
                    v = values[i, j]
                    nn[i, g] += 1
                    op = ops[i]
                    if op == C_SUM:
                        out[i, g] += v
                    elif op == C_MIN:
                        if v < out[i, g]:
                            out[i, g] = v
                    else:
                        if v > out[i, g]:
                            out[i, g] = v
    return out_arr, nn_arr, rc_arr


def fused_group_agg_i64(cnp.int64_t[::1] gids, Py_ssize_t n_groups,
                        cnp.int64_t[:, ::1] values,
                        cnp.uint8_t[:, ::1] valid,
                        cnp.int32_t[::1] ops):
    cdef Py_ssize_t n = gids.shape[0]
    cdef Py_ssize_t m = values.shape[0]
    out_arr = np.zeros((m, n_groups), dtype=np.int64)
    nn_arr = np.zeros((m, n_groups), dtype=np.int64)
    rc_arr = np.zeros(n_groups, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef cnp.int64_t[:, ::1] nn = nn_arr
    cdef cnp.int64_t[::1] rc = rc_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t g, v
    cdef cnp.int32_t op
    cdef cnp.int64_t int_min = np.iinfo(np.int64).min
    cdef cnp.int64_t int_max = np.iinfo(np.int64).max

    for i in range(m):
        if ops[i] == OP_MIN:
            for j in range(n_groups):
                out[i, j] = int_max
        elif ops[i] == OP_MAX:
            for j in range(n_groups):
                out[i, j] = int_min

    with nogil:
        for j in range(n):
            g = gids[j]
            rc[g] += 1
            for i in range(m):
                if valid[i, j]:
                    v = values[i, j]
                    nn[i, g] += 1
                    op = ops[i]
                    if op == C_SUM:
                        out[i, g] += v
                    elif op == C_MIN:
                        if v < out[i, g]:
                            out[i, g] = v
                    else:
                        if v > out[i, g]:
                            out[i, g] = v
    return out_arr, nn_arr, rc_arr
