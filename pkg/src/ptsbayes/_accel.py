"""Optional numba acceleration.

Set ``PTSBAYES_NO_NUMBA=1`` to run every hot kernel through its pure-numpy
implementation instead. The flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("PTSBAYES_NO_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator.

    The compiled function is always built when numba is installed so the
    benchmark can compare both paths in one process; ``USE_NUMBA`` decides
    which one the library dispatches to.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
