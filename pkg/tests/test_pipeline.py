import threading

import numpy as np
import pytest

from gliomaseg.errors import BackendFailure, EmptyMask, NoDetection, PromptOutOfBounds
from gliomaseg.evaluate import dice, phantom
from gliomaseg.geometry import BBox, PromptPoint, bbox_from_mask
from gliomaseg.pipeline import (
    Detection,
    DetectorBackend,
    EmptyDetector,
    FixedDetector,
    MaskSegmenter,
    SegmenterBackend,
    oracle_detector,
    region_grow_segmenter,
    run_pipeline,
    select_primary_detection,
    threshold_mask,
)
from gliomaseg.preprocess import colorize


@pytest.fixture
def disk_case():
    img, gt = phantom(256, 256, (120, 90), 25.0, 0.8, 0.2)
    return colorize(img), gt


def _det(conf, box=(0, 0, 3, 3)):
    return Detection(BBox(*box), conf)


def test_select_single():
    d = _det(0.4)
    assert select_primary_detection([d]) is d


def test_select_argmax():
    dets = [_det(0.3), _det(0.9, (5, 5, 6, 6)), _det(0.5)]
    assert select_primary_detection(dets).confidence == 0.9


def test_select_tie_area():
    small = _det(0.8, (0, 0, 2, 3))     # 12 px
    big = _det(0.8, (10, 10, 14, 15))   # 30 px
    assert select_primary_detection([small, big]) is big


def test_select_tie_corner():
    a = _det(0.8, (4, 4, 5, 5))
    b = _det(0.8, (4, 1, 5, 2))
    assert select_primary_detection([a, b]) is b


def test_select_empty():
    with pytest.raises(NoDetection):
        select_primary_detection([])


def test_detection_confidence_range():
    with pytest.raises(ValueError):
        _det(1.5)


def test_threshold_rules(rng):
    assert threshold_mask(np.full((3, 3), 0.6), 0.5).all()
    assert threshold_mask(np.full((3, 3), 0.5), 0.5).all()
    p = rng.random((16, 16))
    m = threshold_mask(p, 0.5)
    for r in range(16):
        for c in range(16):
            assert m[r, c] == (p[r, c] >= 0.5)
    for t in (0.0, 1.0):
        with pytest.raises(ValueError):
            threshold_mask(p, t)


def test_oracle_detector():
    gt = np.zeros((8, 8), bool)
    gt[3, 5] = True
    det = oracle_detector(gt)
    first, second = det.detect(None), det.detect(None)
    assert first == second
    assert first[0].bbox == BBox(3, 5, 3, 5) and first[0].confidence == 1.0
    with pytest.raises(EmptyMask):
        oracle_detector(np.zeros((4, 4), bool))


def test_oracle_detector_per_component():
    gt = np.zeros((20, 20), bool)
    gt[1:3, 1:3] = True
    gt[10:15, 10:15] = True
    dets = oracle_detector(gt, per_component=True).detect(None)
    assert len(dets) == 2
    assert select_primary_detection(dets).bbox == BBox(10, 10, 14, 14)


def test_region_grow_constant_image():
    seg = region_grow_segmenter(0.1)
    out = seg.segment(np.full((16, 16, 3), 77, np.uint8), PromptPoint(3, 3))
    assert np.all(out == 1.0)


def test_region_grow_phantom_exact(disk_case):
    img, gt = disk_case
    out = region_grow_segmenter(0.2).segment(img, PromptPoint(120, 90))
    assert np.array_equal(out.astype(bool), gt)


def test_region_grow_ramp_tiny_tolerance():
    ramp = np.arange(64, dtype=np.float64).reshape(8, 8) / 63
    out = region_grow_segmenter(1e-4).segment(ramp, PromptPoint(4, 4))
    assert out.sum() == 1 and out[4, 4] == 1


def test_region_grow_rejects_bad_prompt():
    with pytest.raises(PromptOutOfBounds):
        region_grow_segmenter(0.1).segment(np.zeros((4, 4)), PromptPoint(4, 0))
    with pytest.raises(ValueError):
        region_grow_segmenter(0)


def test_region_grow_affine_invariance(rng):
    gray = np.round(rng.random((32, 32)) * 8) / 8
    prompt = PromptPoint(16, 16)
    base = region_grow_segmenter(0.25).segment(gray, prompt)
    scaled = region_grow_segmenter(0.25 * 4).segment(gray * 4 + 3, prompt)
    assert np.array_equal(base, scaled)


def test_identity_cascade(disk_case):
    img, gt = disk_case
    res = run_pipeline(img, oracle_detector(gt), MaskSegmenter(gt), 0.5)
    assert np.array_equal(res.mask, gt)
    assert dice(res.mask, gt) == 1.0
    assert res.detection.bbox.contains(res.prompt.row, res.prompt.col)
    t = res.timings
    assert t.detect_ms >= 0 and t.segment_ms >= 0 and t.total_ms >= t.detect_ms + t.segment_ms


def test_no_detection_path(disk_case):
    img, gt = disk_case
    res = run_pipeline(img, EmptyDetector(), MaskSegmenter(gt))
    assert res.missed and res.prompt is None
    assert not res.mask.any()
    assert dice(res.mask, gt) == 0.0


def test_phantom_region_grow_cascade(disk_case):
    img, gt = disk_case
    res = run_pipeline(img, oracle_detector(gt), region_grow_segmenter(0.2), 0.5)
    assert np.array_equal(res.mask, gt)


def test_size_contract(disk_case):
    img, gt = disk_case
    with pytest.raises(ValueError):
        run_pipeline(img[:100], oracle_detector(gt[:100]), MaskSegmenter(gt[:100]))


class _Boom(SegmenterBackend):
    name = "boom"

    def segment(self, image, prompt):
        raise RuntimeError("kaput")


class _WrongShape(SegmenterBackend):
    name = "wrong"

    def segment(self, image, prompt):
        return np.zeros((3, 3))


def test_backend_failures_labelled(disk_case):
    img, gt = disk_case
    with pytest.raises(BackendFailure) as info:
        run_pipeline(img, oracle_detector(gt), _Boom())
    assert info.value.stage == "segment"
    with pytest.raises(BackendFailure):
        run_pipeline(img, oracle_detector(gt), _WrongShape())
    with pytest.raises(BackendFailure) as info:
        run_pipeline(img, FixedDetector([Detection(BBox(0, 0, 300, 5), 0.9)]), MaskSegmenter(gt))
    assert info.value.stage == "detect"


def test_rerun_bit_identical(disk_case):
    img, gt = disk_case
    runs = [run_pipeline(img, oracle_detector(gt), region_grow_segmenter(0.2)) for _ in range(2)]
    assert runs[0].mask.tobytes() == runs[1].mask.tobytes()
    assert runs[0].probs.tobytes() == runs[1].probs.tobytes()
    assert runs[0].detection == runs[1].detection


class _SingleThreaded(DetectorBackend):
    name = "single"
    thread_safe = False

    def __init__(self, box):
        self.box = box
        self.active = 0
        self.max_active = 0
        self._guard = threading.Lock()

    def detect(self, image):
        with self._guard:
            self.active += 1
            self.max_active = max(self.max_active, self.active)
        threading.Event().wait(0.002)
        with self._guard:
            self.active -= 1
        return [Detection(self.box, 1.0)]


def test_single_threaded_backend_is_serialized(disk_case):
    img, gt = disk_case
    det = _SingleThreaded(bbox_from_mask(gt))
    threads = [threading.Thread(target=run_pipeline, args=(img, det, MaskSegmenter(gt))) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert det.max_active == 1
