"""Detect -> center prompt -> segment cascade over pluggable backends.

A detector proposes boxes, the highest-confidence box is reduced to its
center point, and that point prompts the segmenter, whose probability map
is thresholded into the final mask. A detector miss is not an error: the
result carries an empty mask and ``missed=True``.
"""

from __future__ import annotations

import abc
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BackendFailure, EmptyMask, NoDetection, PromptOutOfBounds, ShapeMismatch
from .geometry import BBox, PromptPoint, bbox_center, bbox_from_mask, components
from .preprocess import PIPELINE_SIZE, to_gray

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    confidence: float
    class_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class StageTimings:
    detect_ms: float
    segment_ms: float
    total_ms: float


@dataclass(frozen=True)
class PipelineResult:
    detection: Detection | None
    prompt: PromptPoint | None
    probs: np.ndarray
    mask: np.ndarray
    timings: StageTimings

    @property
    def missed(self) -> bool:
        return self.detection is None


_lock_guard = threading.Lock()


class _Backend(abc.ABC):
    name = "backend"
    # single-threaded backends get their calls serialized by the pipeline
    thread_safe = True

    def _call_lock(self) -> threading.Lock:
        with _lock_guard:
            lock = self.__dict__.get("_lock")
            if lock is None:
                lock = self.__dict__["_lock"] = threading.Lock()
            return lock

    def describe(self) -> str:
        return self.name


class DetectorBackend(_Backend):
    @abc.abstractmethod
    def detect(self, image: np.ndarray) -> list[Detection]:
        ...


class SegmenterBackend(_Backend):
    @abc.abstractmethod
    def segment(self, image: np.ndarray, prompt: PromptPoint) -> np.ndarray:
        """Probability map in [0, 1] with the image's (h, w)."""


class OracleDetector(DetectorBackend):
    """Returns the ground-truth box with confidence 1.0."""

    name = "oracle"

    def __init__(self, gt_mask: np.ndarray, per_component: bool = False):
        gt = np.asarray(gt_mask, dtype=bool)
        if not gt.any():
            raise EmptyMask("oracle detector needs a non-empty ground-truth mask")
        if per_component:
            boxes = [b for _, b in components(gt)]
        else:
            boxes = [bbox_from_mask(gt)]
        self._detections = tuple(Detection(b, 1.0) for b in boxes)

    def detect(self, image):
        return list(self._detections)


class EmptyDetector(DetectorBackend):
    name = "empty"

    def detect(self, image):
        return []


class FixedDetector(DetectorBackend):
    name = "fixed"

    def __init__(self, detections):
        self._detections = tuple(detections)

    def detect(self, image):
        return list(self._detections)


class MaskSegmenter(SegmenterBackend):
    """Ignores the prompt and returns a fixed mask as probabilities."""

    name = "mask"

    def __init__(self, mask: np.ndarray):
        self._probs = np.asarray(mask, dtype=np.float64)

    def segment(self, image, prompt):
        return self._probs.copy()


class RegionGrowSegmenter(SegmenterBackend):
    """Flood fill from the prompt over pixels within ``tolerance`` of the seed.

    The image is reduced to normalized grayscale first; the output is 1.0
    inside the grown region and 0.0 elsewhere.
    """

    def __init__(self, tolerance: float):
        if not tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {tolerance}")
        self.tolerance = float(tolerance)

    @property
    def name(self) -> str:
        return f"region-grow:{self.tolerance:g}"

    def segment(self, image, prompt):
        gray = to_gray(image)
        h, w = gray.shape
        if not (0 <= prompt.row < h and 0 <= prompt.col < w):
            raise PromptOutOfBounds(f"prompt ({prompt.row}, {prompt.col}) outside {h}x{w} image")
        return kernels.flood_fill(gray, (prompt.row, prompt.col), self.tolerance).astype(np.float64)


def oracle_detector(gt_mask: np.ndarray, per_component: bool = False) -> OracleDetector:
    return OracleDetector(gt_mask, per_component)


def region_grow_segmenter(tolerance: float) -> RegionGrowSegmenter:
    return RegionGrowSegmenter(tolerance)


def select_primary_detection(dets: list[Detection]) -> Detection:
    """Highest confidence; ties -> larger box, then smallest (row_min, col_min)."""
    if not dets:
        raise NoDetection("detector returned no detections")
    return min(dets, key=lambda d: (-d.confidence, -d.bbox.area, d.bbox.row_min, d.bbox.col_min))


def threshold_mask(probs: np.ndarray, t: float = DEFAULT_THRESHOLD) -> np.ndarray:
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {t}")
    return np.asarray(probs) >= t


def _invoke(backend: _Backend, stage: str, fn, *args):
    try:
        if backend.thread_safe:
            return fn(*args)
        with backend._call_lock():
            return fn(*args)
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(stage, exc) from exc


def _ms(t0: int, t1: int) -> float:
    return (t1 - t0) / 1e6


def run_pipeline(
    image: np.ndarray,
    det: DetectorBackend,
    seg: SegmenterBackend,
    threshold: float = DEFAULT_THRESHOLD,
    size: tuple[int, int] | None = PIPELINE_SIZE,
) -> PipelineResult:
    image = np.asarray(image)
    shape = image.shape[:2]
    if size is not None and shape != tuple(size):
        raise ValueError(f"pipeline expects {size[0]}x{size[1]} images, got {shape[0]}x{shape[1]}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")

    t_start = time.perf_counter_ns()
    dets = _invoke(det, "detect", det.detect, image)
    t_det = time.perf_counter_ns()
    for d in dets:
        if not d.bbox.within(shape):
            raise BackendFailure("detect", ValueError(f"box {d.bbox.to_list()} outside {shape}"))

    if not dets:
        empty = np.zeros(shape, dtype=np.float64)
        t_end = time.perf_counter_ns()
        timings = StageTimings(_ms(t_start, t_det), 0.0, _ms(t_start, t_end))
        return PipelineResult(None, None, empty, empty.astype(bool), timings)

    primary = select_primary_detection(dets)
    prompt = bbox_center(primary.bbox)
    assert primary.bbox.contains(prompt.row, prompt.col)

    t_seg0 = time.perf_counter_ns()
    probs = np.asarray(_invoke(seg, "segment", seg.segment, image, prompt), dtype=np.float64)
    t_seg1 = time.perf_counter_ns()
    if probs.shape != shape:
        raise BackendFailure("segment", ShapeMismatch(f"probability map {probs.shape} != image {shape}"))
    if not np.all((probs >= 0.0) & (probs <= 1.0)):
        raise BackendFailure("segment", ValueError("probabilities outside [0, 1]"))
    mask = threshold_mask(probs, threshold)
    t_end = time.perf_counter_ns()
    timings = StageTimings(_ms(t_start, t_det), _ms(t_seg0, t_seg1), _ms(t_start, t_end))
    return PipelineResult(primary, prompt, probs, mask, timings)
