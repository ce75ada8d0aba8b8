"""JIT switch for the numeric kernels.

Set ``SURPLUS_AUCTIONS_NO_NUMBA=1`` to run every kernel as plain Python on
numpy arrays. Numba's own ``NUMBA_DISABLE_JIT`` is honoured as well.
"""

import os

_FALSEY = {"", "0", "false", "no"}


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in _FALSEY


USE_NUMBA = not (_flag("SURPLUS_AUCTIONS_NO_NUMBA") or _flag("NUMBA_DISABLE_JIT"))

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def jit(func):
    """Compile ``func`` with numba when enabled; otherwise return it unchanged."""
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def python_impl(func):
    """Underlying Python function of a (possibly) jitted kernel."""
    return getattr(func, "py_func", func)
