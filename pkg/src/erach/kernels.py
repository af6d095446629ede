"""Backend selection for the hot per-opportunity kernels.

The compiled extension is used when it imports; set ``ERACH_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("ERACH_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

resolve_collisions = _impl.resolve_collisions
stacked_logits = _impl.stacked_logits
sample_categorical = _impl.sample_categorical
