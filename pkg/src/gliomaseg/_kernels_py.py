"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same outputs; used when the extension is not built or
``GLIOMASEG_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import numpy as np


def _neighbors(r: int, c: int, h: int, w: int):
    if r > 0:
        yield r - 1, c
    if r < h - 1:
        yield r + 1, c
    if c > 0:
        yield r, c - 1
    if c < w - 1:
        yield r, c + 1


def flood_fill(gray, seed_row: int, seed_col: int, tolerance: float) -> np.ndarray:
    h, w = gray.shape
    values = gray.tolist()
    seed = values[seed_row][seed_col]
    out = np.zeros((h, w), dtype=np.uint8)
    seen = [[False] * w for _ in range(h)]
    seen[seed_row][seed_col] = True
    stack = [(seed_row, seed_col)]
    while stack:
        r, c = stack.pop()
        out[r, c] = 1
        for nr, nc in _neighbors(r, c, h, w):
            if not seen[nr][nc] and abs(values[nr][nc] - seed) <= tolerance:
                seen[nr][nc] = True
                stack.append((nr, nc))
    return out


def label_components(mask) -> tuple[np.ndarray, int]:
    h, w = mask.shape
    fg = mask.tolist()
    labels = [[0] * w for _ in range(h)]
    n = 0
    for r0 in range(h):
        for c0 in range(w):
            if not fg[r0][c0] or labels[r0][c0]:
                continue
            n += 1
            labels[r0][c0] = n
            stack = [(r0, c0)]
            while stack:
                r, c = stack.pop()
                for nr, nc in _neighbors(r, c, h, w):
                    if fg[nr][nc] and not labels[nr][nc]:
                        labels[nr][nc] = n
                        stack.append((nr, nc))
    return np.asarray(labels, dtype=np.int32).reshape(h, w), n
