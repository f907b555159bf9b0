"""Pure-numpy implementations of the grouped-aggregation kernels.

Semantics must match ``_ckernels`` exactly; the test suite cross-checks the
two backends on random inputs.
"""

import numpy as np

BACKEND = "python"

OP_SUM = 0
OP_MIN = 1
OP_MAX = 2


def _init_out(m, n_groups, ops, dtype, minval, maxval):
    out = np.zeros((m, n_groups), dtype=dtype)
    for i, op in enumerate(ops):
        if op == OP_MIN:
            out[i, :] = maxval
        elif op == OP_MAX:
            out[i, :] = minval
    return out


def fused_group_agg_f64(gids, n_groups, values, valid, ops):
    """Aggregate float64 rows into per-group slots in one conceptual pass.

    gids: int64[n] dense group ids in [0, n_groups)
    values: float64[m, n], valid: uint8[m, n], ops: int32[m]
    Returns (out[m, n_groups], nonnull[m, n_groups], row_counts[n_groups]).
    Slots with nonnull == 0 hold an unspecified value.
    """
    m = values.shape[0]
    row_counts = np.bincount(gids, minlength=n_groups).astype(np.int64)
    out = _init_out(m, n_groups, ops, np.float64, -np.inf, np.inf)
    nn = np.zeros((m, n_groups), dtype=np.int64)
    for i in range(m):
        mask = valid[i].astype(bool)
        g = gids[mask]
        v = values[i][mask]
        nn[i] = np.bincount(g, minlength=n_groups)
        if ops[i] == OP_SUM:
            out[i] = np.bincount(g, weights=v, minlength=n_groups)
        elif ops[i] == OP_MIN:
            np.minimum.at(out[i], g, v)
        else:
            np.maximum.at(out[i], g, v)
    return out, nn, row_counts


def fused_group_agg_i64(gids, n_groups, values, valid, ops):
    """Exact int64 variant of fused_group_agg_f64 (sums never round)."""
    m = values.shape[0]
    row_counts = np.bincount(gids, minlength=n_groups).astype(np.int64)
    lo, hi = np.iinfo(np.int64).min, np.iinfo(np.int64).max
    out = _init_out(m, n_groups, ops, np.int64, lo, hi)
    nn = np.zeros((m, n_groups), dtype=np.int64)
    for i in range(m):
        mask = valid[i].astype(bool)
        g = gids[mask]
        v = values[i][mask]
        nn[i] = np.bincount(g, minlength=n_groups)
        if ops[i] == OP_SUM:
            np.add.at(out[i], g, v)
        elif ops[i] == OP_MIN:
            np.minimum.at(out[i], g, v)
        else:
            np.maximum.at(out[i], g, v)
    return out, nn, row_counts
