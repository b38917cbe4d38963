"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``PSI_KERNELS=python`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py
from ._kernels_py import REGION_COLUMN_BALL, REGION_NONE, REGION_ROW_ELLIPSOID

_compiled = None
if os.environ.get("PSI_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]

pareto_mask = _impl.pareto_mask
in_alt = _impl.in_alt
scan_block = _impl.scan_block
BlockScanner = _impl.BlockScanner
halve_bounds = _impl.halve_bounds

__all__ = ["BACKEND", "BACKENDS", "pareto_mask", "in_alt", "scan_block", "BlockScanner", "halve_bounds",
           "REGION_NONE", "REGION_COLUMN_BALL", "REGION_ROW_ELLIPSOID"]
