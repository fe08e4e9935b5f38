"""Hot loops with a compiled implementation and a pure-Python fallback.

The compiled extension is used when it imports; setting the environment
variable ``TWOSTAGE_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("TWOSTAGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

project_box_disc = _impl.project_box_disc
bfs_sweep = _impl.bfs_sweep

__all__ = ["BACKEND", "bfs_sweep", "project_box_disc"]
