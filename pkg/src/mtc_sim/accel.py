"""Kernel selection: compiled flood loop when available, numpy otherwise.

Set MTC_SIM_PURE_PY=1 to force the numpy kernels (useful for timing
comparisons and for debugging the compiled path against its reference).
"""

from __future__ import annotations

import os


def flood_module():
    """The module providing ``run_flood``; prefers the compiled build."""
    if os.environ.get("MTC_SIM_PURE_PY"):
        from . import _flood_py
        return _flood_py
    try:
        from . import _flood_cy  # type: ignore[attr-defined]
        return _flood_cy
    except ImportError:
        from . import _flood_py
        return _flood_py


def kernel_name() -> str:
    return flood_module().KERNEL_NAME
