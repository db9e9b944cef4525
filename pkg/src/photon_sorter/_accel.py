"""Numba switch.

Hot kernels are written once and compiled with ``numba.njit`` unless the
environment variable ``PHOTON_SORTER_NO_NUMBA`` is set to a truthy value (or
numba is not importable), in which case the same source runs as plain
Python/numpy.  The choice is made at import time.
"""
from __future__ import annotations

import os

_flag = os.environ.get("PHOTON_SORTER_NO_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
