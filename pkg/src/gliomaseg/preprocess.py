"""Slice normalization, grayscale-to-RGB colorization, resizing, label selection.

Images are numpy arrays: normalized slices are float64 ``(h, w)`` in [0, 1],
RGB images are uint8 ``(h, w, 3)``, binary masks are bool ``(h, w)``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .errors import DomainError
from .ingest import LabelMask

PIPELINE_SIZE = (256, 256)


def normalize_intensity(slice_: np.ndarray) -> np.ndarray:
    """Per-slice min-max scaling to [0, 1]. A constant slice maps to all zeros."""
    x = np.asarray(slice_, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty slice")
    if not np.all(np.isfinite(x)):
        raise DomainError("slice contains NaN or Inf")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    out = (x - lo) / (hi - lo)
    # guard against 1 ulp excursions from the division
    return np.clip(out, 0.0, 1.0)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def colorize(slice_: np.ndarray) -> np.ndarray:
    """Quantize a normalized slice to 8 bits and replicate it into r=g=b."""
    x = np.asarray(slice_, dtype=np.float64)
    if not np.all(np.isfinite(x)) or x.min(initial=0.0) < 0.0 or x.max(initial=0.0) > 1.0:
        raise DomainError("colorize expects pixel values in [0, 1]")
    q = _round_half_away(x * 255.0).astype(np.uint8)
    return np.repeat(q[:, :, None], 3, axis=2)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Normalized [0, 1] grayscale view of an RGB uint8 image or a float slice."""
    image = np.asarray(image)
    if image.ndim == 3:
        return image.astype(np.float64).mean(axis=2) / 255.0
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return image.astype(np.float64)


def _bilinear_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel-centre mapping, clamped at the edges
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(arr: np.ndarray, target: tuple[int, int] = PIPELINE_SIZE) -> np.ndarray:
    """Float64 bilinear resample of a 2D or channel-last 3D array."""
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape[:2]
    th, tw = target
    r0, r1, fr = _bilinear_axis(h, th)
    c0, c1, fc = _bilinear_axis(w, tw)
    if a.ndim == 3:
        fr, fc = fr[:, None, None], fc[None, :, None]
    else:
        fr, fc = fr[:, None], fc[None, :]
    top = a[r0][:, c0] * (1 - fc) + a[r0][:, c1] * fc
    bottom = a[r1][:, c0] * (1 - fc) + a[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def resize_image(img: np.ndarray, target: tuple[int, int] = PIPELINE_SIZE) -> np.ndarray:
    """Bilinear resize of an RGB uint8 image with edge clamping."""
    img = np.asarray(img)
    if img.shape[:2] == tuple(target):
        return img.copy()
    out = resize_bilinear(img, target)
    return np.clip(_round_half_away(out), 0, 255).astype(np.uint8)


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.intp)
    return np.minimum(idx, n_in - 1)


def resize_mask(mask, target: tuple[int, int] = PIPELINE_SIZE):
    """Nearest-neighbour resize; never introduces labels absent from the source.

    Accepts a ``LabelMask`` (returns a ``LabelMask``) or a 2D array.
    """
    if isinstance(mask, LabelMask):
        return LabelMask(resize_mask(mask.labels, target), mask.semantics)
    m = np.asarray(mask)
    rows = _nearest_index(m.shape[0], target[0])
    cols = _nearest_index(m.shape[1], target[1])
    return m[rows][:, cols]


def extract_label_mask(mask: LabelMask | np.ndarray, labels: Iterable[int]) -> np.ndarray:
    labels = sorted({int(v) for v in labels})
    if not labels:
        raise ValueError("label set must be non-empty")
    raw = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
    return np.isin(raw, labels)


def save_rgb_png(img: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)
    return path


def save_mask_png(mask: np.ndarray, path: str | Path) -> Path:
    """Binary mask as 8-bit gray, 0 / 255."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)
    return path


def load_rgb_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127
