"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``INVPOMDP_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from ._kernels_py import (DEMAND_DIRAC, DEMAND_EXP, DEMAND_GAUSS, STATUS_OK,
                          STATUS_ZERO_MASS)
from . import _kernels_py as py

compiled = None
if not os.environ.get("INVPOMDP_PURE_PYTHON"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else py
BACKEND = "cython" if compiled is not None else "numpy"

grid_weights = py.grid_weights
grid_filter_step = _impl.grid_filter_step
transition_table = _impl.transition_table
backward_sweep = _impl.backward_sweep

__all__ = [
    "BACKEND", "compiled", "py", "grid_weights", "grid_filter_step",
    "transition_table", "backward_sweep", "DEMAND_GAUSS", "DEMAND_EXP",
    "DEMAND_DIRAC", "STATUS_OK", "STATUS_ZERO_MASS",
]
