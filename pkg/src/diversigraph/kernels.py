"""Select the compiled kernels when available, else the numpy fallback.

Set ``DIVERSIGRAPH_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("DIVERSIGRAPH_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
clustering_counts = _impl.clustering_counts
perm_loglik = _impl.perm_loglik
batch_reductions = _impl.batch_reductions
anneal = _impl.anneal

fallback = _kernels_py


def compiled():
    """Return the compiled module, or None when it was not built."""
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _kernels
