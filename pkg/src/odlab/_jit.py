"""Numba switch.

Set ``ODLAB_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.  The
interpreted path is slow on production grids but is handy for debugging and is
what the benchmark compares against.
"""

import os

JIT_ENABLED = os.environ.get("ODLAB_DISABLE_JIT", "0").lower() not in ("1", "true", "yes")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        JIT_ENABLED = False

if not JIT_ENABLED:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper


def python_impl(func):
    """Return the uncompiled Python function behind a (possibly) jitted kernel."""
    return getattr(func, "py_func", func)
