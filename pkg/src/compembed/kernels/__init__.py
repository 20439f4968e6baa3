"""Hot embedding kernels: compiled extension with a pure-numpy fallback.

The compiled backend is selected automatically when the extension built;
set COMPEMBED_FORCE_PYTHON=1 to force the numpy fallback. Both backends
produce bit-identical results (same evaluation and accumulation order).
"""

import os

from . import _numpy_backend

if os.environ.get("COMPEMBED_FORCE_PYTHON"):
    _impl = _numpy_backend
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _numpy_backend

BACKEND = _impl.BACKEND
gather_rows = _impl.gather_rows
compose_forward = _impl.compose_forward
compose_backward = _impl.compose_backward
scatter_add_rows = _impl.scatter_add_rows
adagrad_update_rows = _impl.adagrad_update_rows


def available_backends():
    """Names of importable backends, compiled one first when present."""
    names = []
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    names.append("numpy")
    return names


def get_backend(name: str):
    """Return the backend module by name ('cython' or 'numpy')."""
    if name == "numpy":
        return _numpy_backend
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
