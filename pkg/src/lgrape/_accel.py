"""Numba switch.

Set ``LGRAPE_NUMBA=0`` in the environment before import to force the
pure-numpy kernels.  When numba is missing the numpy path is used silently.
"""

import os

_flag = os.environ.get("LGRAPE_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA = bool(_requested and _numba is not None)


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compilation is always attempted when numba is present (even if
    ``USE_NUMBA`` is false) so that benchmarks can compare both paths.
    """
    if _numba is None:  # pragma: no cover
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)


HAVE_NUMBA = _numba is not None
