"""Kernel backend selection.

The compiled extension is used when it imports; setting
``BEAMROA_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("BEAMROA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

schur_psd_block = _impl.schur_psd_block
upwind_step = _impl.upwind_step

__all__ = ["BACKEND", "schur_psd_block", "upwind_step"]
