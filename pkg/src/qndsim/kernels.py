"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``QNDSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback as fallback

try:
    if os.environ.get("QNDSIM_PURE_PYTHON", "").strip() not in ("", "0"):
        raise ImportError("compiled kernels disabled by QNDSIM_PURE_PYTHON")
    from . import _kernels as compiled
except ImportError:
    compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"

atomic_spin_sums = _impl.atomic_spin_sums
resample_sums = _impl.resample_sums
ATOMIC_COLUMNS = fallback.ATOMIC_COLUMNS
