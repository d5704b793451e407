"""Backend switch for the compiled kernels.

Set ``QLWEB_NO_NUMBA=1`` before import to force the pure-numpy code paths
(useful for debugging, or where numba is not installed).
"""
import os
import warnings

_flag = os.environ.get("QLWEB_NO_NUMBA", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED

if not HAVE_NUMBA and not DISABLED:  # pragma: no cover
    warnings.warn("numba not importable; qlweb falls back to numpy kernels")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, a no-op decorator otherwise.

    The numba-compiled variants are always built when numba exists so the
    benchmark can compare both backends in one process; ``USE_NUMBA`` only
    decides which variant the public dispatchers call.
    """
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def deco(func):
        return func

    return deco
