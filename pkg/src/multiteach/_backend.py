"""Pick the grid kernel implementation at import time.

Set ``MULTITEACH_PURE_PYTHON=1`` to force the numpy fallback even when the
compiled extension is importable.
"""
import os

from . import _pykernels

try:
    if os.environ.get("MULTITEACH_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

residual_stats = _impl.residual_stats
kernel_step = _impl.kernel_step


def get_backend(name):
    """Return the kernel module called ``name`` ('cython' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
