"""Backend selection for the batch integration kernels.

The compiled extension is used when importable; ``CBFEQ_KERNEL=python`` forces
the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("CBFEQ_KERNEL", "").lower() == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

rk4_linear_batch = _impl.rk4_linear_batch
field_linear_batch = _impl.field_linear_batch
rk4_batch = _kernels_py.rk4_batch

STATUS_RUNNING = _kernels_py.STATUS_RUNNING
STATUS_CONVERGED = _kernels_py.STATUS_CONVERGED
STATUS_ESCAPED = _kernels_py.STATUS_ESCAPED
STATUS_DEGENERATE = _kernels_py.STATUS_DEGENERATE


def implementations():
    """Both backends by name (the compiled one only if built)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
