"""Boxes, prompt points and 4-connected component analysis.

Coordinates are (row, col) with row 0 at the image top; boxes use inclusive
bounds and serialize as ``[row_min, col_min, row_max, col_max]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyMask


@dataclass(frozen=True, order=True)
class BBox:
    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self):
        if min(self.row_min, self.col_min) < 0:
            raise ValueError(f"negative box bound in {self}")
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"inverted box {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    @property
    def area(self) -> int:
        return self.height * self.width

    def contains(self, row: int, col: int) -> bool:
        return self.row_min <= row <= self.row_max and self.col_min <= col <= self.col_max

    def within(self, shape: tuple[int, int]) -> bool:
        return self.row_max < shape[0] and self.col_max < shape[1]

    def to_list(self) -> list[int]:
        return [self.row_min, self.col_min, self.row_max, self.col_max]

    @classmethod
    def from_list(cls, values) -> "BBox":
        return cls(*(int(v) for v in values))


@dataclass(frozen=True)
class PromptPoint:
    row: int
    col: int
    positive: bool = True


def bbox_from_mask(mask: np.ndarray) -> BBox:
    m = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixels")
    cols = np.flatnonzero(m.any(axis=0))
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def bbox_center(b: BBox) -> PromptPoint:
    return PromptPoint((b.row_min + b.row_max) // 2, (b.col_min + b.col_max) // 2)


def components(mask: np.ndarray) -> list[tuple[np.ndarray, BBox]]:
    """All 4-connected components as (bool mask, bbox), in raster order."""
    labels, n = kernels.label_components(np.asarray(mask, dtype=bool))
    out = []
    for k in range(1, n + 1):
        comp = labels == k
        out.append((comp, bbox_from_mask(comp)))
    return out


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 4-connected component.

    Ties go to the component whose bbox has the smallest (row_min, col_min).
    """
    m = np.asarray(mask, dtype=bool)
    labels, n = kernels.label_components(m)
    if n == 0:
        raise EmptyMask("mask has no foreground pixels")
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    tied = np.flatnonzero(sizes == sizes.max()) + 1

    def corner(k: int) -> tuple[int, int]:
        b = bbox_from_mask(labels == k)
        return b.row_min, b.col_min

    best = min(tied, key=corner) if len(tied) > 1 else tied[0]
    return labels == best


def bbox_iou(a: BBox, b: BBox) -> float:
    ih = min(a.row_max, b.row_max) - max(a.row_min, b.row_min) + 1
    iw = min(a.col_max, b.col_max) - max(a.col_min, b.col_min) + 1
    inter = max(ih, 0) * max(iw, 0)
    return inter / (a.area + b.area - inter)
