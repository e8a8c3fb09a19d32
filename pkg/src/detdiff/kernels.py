"""Kernel selection: compiled extension if importable, numpy fallback otherwise.

Set DETDIFF_PURE_PYTHON=1 to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("DETDIFF_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

transport_batch = _impl.transport_batch
walk_float = _impl.walk_float
walk_modular = _impl.walk_modular
default_nterms = _pykernels.default_nterms
