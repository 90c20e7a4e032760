"""Hot kernels: compiled extension when available, numpy fallback otherwise.

Set ``MORPHFORGE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("MORPHFORGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

rasterize_labels = _impl.rasterize_labels
warp_blend = _impl.warp_blend
warp_affine = _impl.warp_affine
lbp_codes = _impl.lbp_codes

__all__ = ["BACKEND", "rasterize_labels", "warp_blend", "warp_affine", "lbp_codes"]
