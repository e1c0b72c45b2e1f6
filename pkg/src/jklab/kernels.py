"""Hot loops: the compiled core when it is importable, else the Python twin.

Set JKLAB_PURE_PYTHON=1 to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

if os.environ.get("JKLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

path_endpoints = _impl.path_endpoints
record_path = _impl.record_path
exit_times = _impl.exit_times
subordinator_increments = _impl.subordinator_increments

__all__ = ["BACKEND", "path_endpoints", "record_path", "exit_times", "subordinator_increments"]
