"""Grouped-aggregation kernels with a compiled core and a numpy fallback.

The compiled extension is preferred when it imported cleanly; set
``QACCEL_PURE_PYTHON=1`` to force the fallback (the benchmark suite uses
this to compare the two).
"""

import os

from . import _pykernels

if os.environ.get("QACCEL_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

OP_SUM = _pykernels.OP_SUM
OP_MIN = _pykernels.OP_MIN
OP_MAX = _pykernels.OP_MAX

BACKEND = _impl.BACKEND
fused_group_agg_f64 = _impl.fused_group_agg_f64
fused_group_agg_i64 = _impl.fused_group_agg_i64

__all__ = ["BACKEND", "OP_SUM", "OP_MIN", "OP_MAX",
           "fused_group_agg_f64", "fused_group_agg_i64",
           "backends"]


def backends():
    """Both backends keyed by name; compiled one only if importable."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
