"""Backend selection for the regression kernels.

The compiled extension is used when it imports; otherwise, or when
``HORA_PURE_PYTHON=1`` is set, the numpy implementation is used.  Both expose
``mixture_forward`` and ``objective_grad`` with identical signatures.
"""
import os

from . import _kernels_py

if os.environ.get("HORA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

mixture_forward = _impl.mixture_forward
objective_grad = _impl.objective_grad
