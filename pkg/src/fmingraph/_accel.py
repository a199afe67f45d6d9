"""Backend switch for the compiled kernels.

Setting ``FMINGRAPH_DISABLE_NUMBA=1`` (or any of ``true``/``yes``/``on``) before
import forces the pure-numpy implementations. The same happens automatically
when numba cannot be imported.
"""

from __future__ import annotations

import os

_FLAG = "FMINGRAPH_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


try:
    if not _numba_requested():
        raise ImportError("numba disabled by environment")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if _njit is None:
        return func
    return _njit(cache=True, nogil=True)(func)
