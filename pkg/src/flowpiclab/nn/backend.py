"""Kernel backend selection.

The compiled extension is used when importable; otherwise the numpy
fallback.  Set FLOWPICLAB_BACKEND=numpy (or =cython) to force a choice.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_requested = os.environ.get("FLOWPICLAB_BACKEND", "auto")

if _requested == "numpy":
    _impl = kernels_numpy
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise
        _impl = kernels_numpy

BACKEND = "cython" if _impl is not kernels_numpy else "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
split_scan = _impl.split_scan
