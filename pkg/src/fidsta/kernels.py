"""Kernel backend selection.

The compiled extension is used when importable; ``FIDSTA_PURE_PYTHON=1``
forces the numpy fallback. Both expose ``series_pdf``, ``spline_pdf`` and
``topk_update`` with identical signatures.
"""

from __future__ import annotations

import logging
import os
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


def get_backend(name: str = "auto") -> ModuleType:
    """Return the kernel module for ``name`` in {"auto", "compiled", "python"}."""
    if name == "python":
        return _pykernels
    compiled = _load_compiled()
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built (pip install -e . --no-build-isolation)")
        return compiled
    if name != "auto":
        raise ValueError(f"unknown kernel backend {name!r}")
    if os.environ.get("FIDSTA_PURE_PYTHON", "") not in ("", "0"):
        return _pykernels
    if compiled is None:
        log.debug("compiled kernels unavailable; using numpy fallback")
        return _pykernels
    return compiled


_impl = get_backend()
BACKEND: str = _impl.BACKEND
series_pdf = _impl.series_pdf
spline_pdf = _impl.spline_pdf
topk_update = _impl.topk_update
