"""Hot kernels, compiled when available.

Set ``SPATIALSPEC_PURE_PYTHON=1`` to force the numpy versions.
"""
import os

from . import _pure

if os.environ.get("SPATIALSPEC_PURE_PYTHON"):
    _impl = _pure
else:
    try:
        from . import _compiled as _impl
    except ImportError:
        _impl = _pure

BACKEND = "cython" if _impl is not _pure else "python"

ar_profile = _impl.ar_profile
logabsdet_eig = _impl.logabsdet_eig
knn_indices = _impl.knn_indices

__all__ = ["BACKEND", "ar_profile", "logabsdet_eig", "knn_indices"]
