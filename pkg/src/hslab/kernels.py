"""Backend selection for the time-stepping kernel.

The compiled Cython kernel is used when it imports; otherwise (or when
``HSLAB_BACKEND=python`` is set) the numpy implementation is used.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

ST_OK, ST_NONFINITE, ST_MAXSTEPS = 0, 1, 2


def available_backends():
    return ["cython", "python"] if _ckernels is not None else ["python"]


def get_advance(backend=None):
    """Return the ``advance`` kernel for ``backend`` ("cython", "python" or None for default)."""
    backend = backend or os.environ.get("HSLAB_BACKEND") or default_backend()
    if backend == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernel not built; reinstall with Cython available")
        return _ckernels.advance
    if backend == "python":
        return _pykernels.advance
    raise ValueError(f"unknown backend {backend!r}")


def default_backend():
    return "cython" if _ckernels is not None else "python"
