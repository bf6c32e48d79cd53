"""Backend dispatch for the hot loops.

The numba backend is used when numba imports cleanly, unless the
environment variable ``REFAB_DISABLE_NUMBA`` is set to a truthy value, in
which case the vectorised numpy fallback is used. The choice is made once,
at import time.
"""

import os

from . import _numpy
from ._numpy import BAD_RESOLUTION, BAD_VELOCITY, CONSTANT, LINEAR, OK, REENTRANT

_FLAG = "REFAB_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


def load_backend(name):
    """Return the kernel module for ``"numba"`` or ``"numpy"``."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown backend {name!r}")


if _numba_requested():
    try:
        impl = load_backend("numba")
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        impl = _numpy
        BACKEND = "numpy"
else:
    impl = _numpy
    BACKEND = "numpy"

__all__ = [
    "BACKEND", "impl", "load_backend",
    "REENTRANT", "LINEAR", "CONSTANT", "OK", "BAD_VELOCITY", "BAD_RESOLUTION",
]
