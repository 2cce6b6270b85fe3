"""Kernel dispatch: compiled extension when available, pure Python otherwise.

Set ``GLIOMASEG_PURE_PYTHON=1`` before import to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("GLIOMASEG_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def flood_fill(gray: np.ndarray, seed: tuple[int, int], tolerance: float) -> np.ndarray:
    """4-connected region of pixels within ``tolerance`` of the seed value.

    Returns a uint8 {0,1} array. ``seed`` is (row, col) and must be in bounds.
    """
    gray = np.ascontiguousarray(gray, dtype=np.float64)
    return _impl.flood_fill(gray, int(seed[0]), int(seed[1]), float(tolerance))


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected component labels, numbered 1..n in raster order of first pixel."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    return _impl.label_components(mask)


def implementations() -> dict:
    """Every importable kernel implementation, keyed by name (for tests and benchmarks)."""
    impls = {"python": _kernels_py}
    try:
        from . import _kernels
        impls["cython"] = _kernels
    except ImportError:
        pass
    return impls
