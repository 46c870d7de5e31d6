"""Kernel backend selection.

Tree kernels run under numba when it is importable. Setting
``REFINE_DISABLE_NUMBA=1`` forces the pure-numpy path, which produces the
same trees (same candidate order, same split arithmetic) at lower speed.
"""

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the test environment
    HAVE_NUMBA = False

NUMBA_DISABLED = os.environ.get("REFINE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED

BACKENDS = ("numba", "numpy")


def resolve(backend="auto"):
    if backend == "auto":
        return "numba" if USE_NUMBA else "numpy"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS} or 'auto'")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
