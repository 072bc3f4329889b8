"""Numba switch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when numba is importable and ``SUBSEARCH_DISABLE_NUMBA`` is
unset (or "0").  Each kernel module also carries a vectorised numpy twin; the
public wrappers pick one based on :data:`USE_NUMBA`.
"""

import os

_flag = os.environ.get("SUBSEARCH_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("numba disabled by SUBSEARCH_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _njit is not None:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
