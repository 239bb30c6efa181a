"""Numba dispatch: hot kernels are jitted unless SCASIM_NUMBA=0 (pure-Python fallback)."""

import os

_flag = os.environ.get("SCASIM_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _flag not in ("0", "false", "off", "no")

if NUMBA_ENABLED:
    try:
        from numba import njit as _numba_njit

        def njit(*args, **kwargs):
            kwargs.setdefault("cache", True)
            if args and callable(args[0]):
                return _numba_njit(cache=True)(args[0])
            return _numba_njit(*args, **kwargs)

    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


BACKEND = "numba" if NUMBA_ENABLED else "python"
