"""Optional numba acceleration.

Set ``MANAKOV_NFDM_NO_NUMBA=1`` before import to force the pure-numpy
kernels, e.g. for debugging or on platforms without numba.
"""
import os

try:
    from numba import njit as _njit
    numba_installed = True
except ImportError:  # pragma: no cover
    numba_installed = False

_flag = os.environ.get("MANAKOV_NFDM_NO_NUMBA", "").strip().lower()
force_no_numba = _flag not in ("", "0", "false", "no")

USE_NUMBA = numba_installed and not force_no_numba


def optional_njit(*args, **kwargs):
    def decorator(func):
        if numba_installed:
            return _njit(*args, **kwargs)(func)
        return func
    return decorator
