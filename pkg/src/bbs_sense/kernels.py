"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``BBS_SENSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("BBS_SENSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

popcount = _impl.popcount
popcount_andnot = _impl.popcount_andnot
batch_popcount_andnot = _impl.batch_popcount_andnot
or_inplace = _impl.or_inplace
road_walk = _impl.road_walk

__all__ = [
    "BACKEND",
    "popcount",
    "popcount_andnot",
    "batch_popcount_andnot",
    "or_inplace",
    "road_walk",
]
