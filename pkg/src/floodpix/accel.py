"""Numba/numpy kernel dispatch.

Hot inner loops (histogram accumulation, split scans, the speckle filter,
per-sample SGD passes) exist twice: a loop kernel compiled with numba's
``@njit`` and a vectorized pure-numpy fallback. Both paths compute in
float64 with identical accumulation order, so their outputs are
bit-identical; ``floodpix.bench`` compares their speed.

Path selection is controlled by the ``FLOODPIX_NUMBA`` environment
variable, read once at import time:

* unset / ``auto`` -- use numba when importable, fallback otherwise
* ``0`` / ``off``  -- force the pure-numpy path
* ``1`` / ``on``   -- require numba (raises if missing)
"""

import os

try:
    from numba import njit as _numba_njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    _numba_njit = None
    NUMBA_AVAILABLE = False

_env = os.environ.get("FLOODPIX_NUMBA", "auto").strip().lower()
if _env in ("", "auto"):
    NUMBA_ENABLED = NUMBA_AVAILABLE
elif _env in ("0", "off", "false", "no"):
    NUMBA_ENABLED = False
elif _env in ("1", "on", "true", "yes", "force"):
    if not NUMBA_AVAILABLE:
        raise ImportError("FLOODPIX_NUMBA=%s but numba is not importable" % _env)
    NUMBA_ENABLED = True
else:
    raise ValueError("unrecognized FLOODPIX_NUMBA value: %r" % _env)


def jit_kernel(func):
    """Compile a loop kernel with numba, or return it unchanged.

    When numba is missing the undecorated Python source doubles as the
    (slow) reference implementation, which keeps kernel semantics in one
    place.
    """
    if _numba_njit is None:
        return func
    return _numba_njit(cache=True)(func)


def resolve_use_numba(use_numba):
    """Map a per-call override (``None`` means "use the env policy")."""
    if use_numba is None:
        return NUMBA_ENABLED
    if use_numba and not NUMBA_AVAILABLE:
        raise RuntimeError("numba path requested but numba is not importable")
    return bool(use_numba)


def using_numba():
    """True when the env-selected default path is the numba one."""
    return NUMBA_ENABLED
