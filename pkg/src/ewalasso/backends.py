"""Select the compute backend at import time.

The compiled extension ``_kernels`` is preferred when importable; otherwise
the NumPy twin ``_kernels_py`` takes over transparently.  Set the
environment variable ``EWALASSO_BACKEND`` to ``cython`` or ``python`` to
force one (forcing ``cython`` raises if the extension is missing).
"""

import os

_requested = os.environ.get("EWALASSO_BACKEND", "").strip().lower()
if _requested not in ("", "cython", "python"):
    raise ImportError(
        f"EWALASSO_BACKEND must be 'cython' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _kernels_py as _impl
        BACKEND = "python"

cd_sweeps = _impl.cd_sweeps
langevin_chain = _impl.langevin_chain
matrix_langevin_chain = _impl.matrix_langevin_chain


def active_backend():
    """Name of the backend in use: 'cython' or 'python'."""
    return BACKEND
