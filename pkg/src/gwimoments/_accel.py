"""Optional numba acceleration.

Set ``GWIMOMENTS_DISABLE_NUMBA=1`` to force the pure-numpy code paths.
"""
import os

_disabled = os.environ.get("GWIMOMENTS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError("numba disabled by environment")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorate(func):
            return func

        return decorate


def backend_name():
    return "numba" if HAS_NUMBA else "numpy"
