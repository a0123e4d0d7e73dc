"""Selects the compiled kernel backend when it is importable.

Set ``TILTMARL_PURE=1`` to force the numpy fallback.
"""
import os

from . import _kernels_np

if os.environ.get("TILTMARL_PURE", "") not in ("", "0"):
    _impl = _kernels_np
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_np

BACKEND = _impl.BACKEND
link_rsrp = _impl.link_rsrp
serve = _impl.serve
window_counts = _impl.window_counts
share_resources = _impl.share_resources
