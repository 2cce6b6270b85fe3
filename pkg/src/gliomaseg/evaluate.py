"""Dice scoring, synthetic phantoms, single-case and batch evaluation, overlays."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .augment import PRNG_NAME, NoiseSpec, add_gaussian_noise, case_seed, rng_for
from .errors import (
    BackendError,
    CaseError,
    CaseManifestError,
    DataError,
    DimMismatch,
    EmptyRegion,
    GeometryError,
)
from .geometry import BBox, bbox_from_mask, bbox_iou
from .ingest import (
    ET_LABELS,
    Modality,
    Volume,
    extract_axial_mask,
    extract_axial_slice,
    load_nifti,
    middle_slice_index,
    save_nifti,
)
from .pipeline import (
    DEFAULT_THRESHOLD,
    DetectorBackend,
    EmptyDetector,
    MaskSegmenter,
    OracleDetector,
    RegionGrowSegmenter,
    SegmenterBackend,
    run_pipeline,
)
from .preprocess import (
    PIPELINE_SIZE,
    colorize,
    extract_label_mask,
    normalize_intensity,
    resize_image,
    resize_mask,
    save_rgb_png,
)
from .report import CaseResult, Report, config_digest

log = logging.getLogger(__name__)

PRED_COLOR = (255, 0, 0)
GT_COLOR = (0, 255, 0)
AGREE_COLOR = (255, 255, 0)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks score 1.0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def phantom(
    width: int,
    height: int,
    disk_center: tuple[float, float],
    radius: float,
    fg_intensity: float = 0.8,
    bg_intensity: float = 0.2,
) -> tuple[np.ndarray, np.ndarray]:
    """Disk phantom: a (height, width) slice and its exact ground-truth mask."""
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if fg_intensity == bg_intensity:
        raise ValueError("foreground and background intensities must differ")
    for v in (fg_intensity, bg_intensity):
        if not 0.0 <= v <= 1.0:
            raise ValueError("intensities must lie in [0, 1]")
    cr, cc = disk_center
    if cr - radius < 0 or cc - radius < 0 or cr + radius > height - 1 or cc + radius > width - 1:
        raise GeometryError(f"disk at {disk_center} with radius {radius} exceeds {height}x{width}")
    rr, cc_ = np.ogrid[:height, :width]
    mask = (rr - cr) ** 2 + (cc_ - cc) ** 2 <= radius ** 2
    slice_ = np.where(mask, fg_intensity, bg_intensity).astype(np.float64)
    return slice_, mask


@dataclass(frozen=True)
class PhantomCase:
    case_id: str
    slice: np.ndarray
    mask: np.ndarray


def phantom_suite(
    count: int,
    seed: int = 0,
    size: tuple[int, int] = PIPELINE_SIZE,
    radius_range: tuple[float, float] = (12.0, 40.0),
    fg_intensity: float = 0.8,
    bg_intensity: float = 0.2,
) -> list[PhantomCase]:
    rng = rng_for(seed)
    h, w = size
    cases = []
    for i in range(count):
        radius = float(rng.uniform(*radius_range))
        margin = math.ceil(radius) + 1
        center = (int(rng.integers(margin, h - margin)), int(rng.integers(margin, w - margin)))
        slice_, mask = phantom(w, h, center, radius, fg_intensity, bg_intensity)
        cases.append(PhantomCase(f"phantom_{i:04d}", slice_, mask))
    return cases


def write_phantom_dataset(cases: Sequence[PhantomCase], out_dir: str | Path, et_label: int = 4) -> Path:
    """Write phantoms as single-slice NIfTI pairs plus a case manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for case in cases:
        img = Volume(case.slice.T[:, :, None].astype(np.float32), (1.0, 1.0, 1.0), Modality.T1CE)
        seg = Volume((case.mask.T[:, :, None] * et_label).astype(np.uint8), (1.0, 1.0, 1.0), Modality.SEG)
        img_name = f"{case.case_id}_t1ce.nii.gz"
        seg_name = f"{case.case_id}_seg.nii.gz"
        save_nifti(img, out_dir / img_name)
        save_nifti(seg, out_dir / seg_name)
        entries.append({
            "case_id": case.case_id,
            "image_path": img_name,
            "gt_seg_path": seg_name,
            "modality": "T1CE",
            "slice_index": "middle",
            "snr": None,
            "seed": None,
        })
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=2) + "\n")
    return manifest


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbour outside the mask (image edge counts as outside)."""
    m = np.asarray(mask, dtype=bool)
    p = np.pad(m, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~interior


def render_overlay(image: np.ndarray, pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Prediction boundary in red, ground truth in green, shared boundary pixels in yellow."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if not (image.shape[:2] == pred.shape == gt.shape):
        raise DimMismatch(f"overlay inputs differ in size: {image.shape[:2]}, {pred.shape}, {gt.shape}")
    bp, bg = boundary(pred), boundary(gt)
    out = image.copy()
    out[bp & ~bg] = PRED_COLOR
    out[bg & ~bp] = GT_COLOR
    out[bp & bg] = AGREE_COLOR
    return out


def evaluate_case(
    gt: np.ndarray,
    image: np.ndarray,
    det: DetectorBackend,
    seg: SegmenterBackend,
    threshold: float = DEFAULT_THRESHOLD,
    case_id: str = "case",
    snr: float | None = None,
    seed: int | None = None,
    native_gt: np.ndarray | None = None,
) -> tuple[CaseResult, np.ndarray]:
    """Run the cascade on one image and score it against ``gt``.

    When ``native_gt`` is given the prediction is resized back to that grid
    (nearest neighbour) and scored there instead. Returns the result row and
    the predicted mask at pipeline resolution.
    """
    gt = np.asarray(gt, dtype=bool)
    image = np.asarray(image)
    if gt.shape != image.shape[:2]:
        raise DimMismatch(f"ground truth {gt.shape} does not match image {image.shape[:2]}")
    res = run_pipeline(image, det, seg, threshold)
    if native_gt is not None:
        native_gt = np.asarray(native_gt, dtype=bool)
        score = dice(resize_mask(res.mask, native_gt.shape), native_gt)
    else:
        score = dice(res.mask, gt)
    iou = None
    if res.detection is not None and gt.any():
        iou = bbox_iou(res.detection.bbox, bbox_from_mask(gt))
    row = CaseResult(
        case_id=case_id,
        dice=score,
        detect_ms=res.timings.detect_ms,
        segment_ms=res.timings.segment_ms,
        total_ms=res.timings.total_ms,
        detection_missed=res.missed,
        bbox_iou_vs_gt=iou,
        snr_used=None if snr is None else float(snr),
        seed_used=None if seed is None else int(seed),
        bbox=None if res.detection is None else res.detection.bbox.to_list(),
        prompt=None if res.prompt is None else [res.prompt.row, res.prompt.col],
    )
    return row, res.mask


# ---------------------------------------------------------------- batch


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    image_path: Path
    gt_seg_path: Path
    modality: str = "T1CE"
    slice_index: int | str = "middle"
    snr: float | None = None
    seed: int | None = None


def load_case_manifest(path: str | Path) -> list[CaseSpec]:
    """Parse a case manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise CaseManifestError(f"case manifest not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise CaseManifestError(f"unreadable case manifest {path}: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise CaseManifestError(f"{path}: manifest must be a non-empty JSON list")
    specs, seen = [], set()
    for i, e in enumerate(entries):
        try:
            cid = str(e["case_id"])
            idx = e.get("slice_index", "middle")
            if idx != "middle" and not (isinstance(idx, int) and idx >= 0):
                raise ValueError(f"slice_index must be 'middle' or a non-negative integer, got {idx!r}")
            snr = e.get("snr")
            if snr is not None and not float(snr) > 0:
                raise ValueError(f"snr must be positive, got {snr}")
            spec = CaseSpec(
                case_id=cid,
                image_path=path.parent / e["image_path"],
                gt_seg_path=path.parent / e["gt_seg_path"],
                modality=str(e.get("modality", "T1CE")).upper(),
                slice_index=idx,
                snr=None if snr is None else float(snr),
                seed=None if e.get("seed") is None else int(e["seed"]),
            )
            Modality(spec.modality)
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseManifestError(f"{path}: entry {i} is invalid: {exc}") from exc
        if cid in seen:
            raise CaseManifestError(f"{path}: duplicate case_id {cid!r}")
        seen.add(cid)
        specs.append(spec)
    return specs


@dataclass(frozen=True)
class BatchConfig:
    detector: str = "oracle"
    segmenter: str = "region-grow:0.2"
    threshold: float = DEFAULT_THRESHOLD
    snr: float | None = None
    seed: int = 0
    clamp: bool = True
    labels: tuple[int, ...] = tuple(sorted(ET_LABELS))
    per_component: bool = False
    eval_native: bool = False
    strict: bool = False
    jobs: int = 1
    modality: str | None = None
    overlays: bool = False

    def digest(self) -> str:
        # parallelism does not change results, so it stays out of the digest
        d = asdict(self)
        d.pop("jobs")
        return config_digest(d)


@dataclass
class PreparedCase:
    case_id: str
    image: np.ndarray  # RGB at pipeline size
    gt: np.ndarray  # bool at pipeline size
    native_gt: np.ndarray
    snr: float | None
    seed: int | None


def prepare_case(spec: CaseSpec, config: BatchConfig, index: int) -> PreparedCase:
    """Load, slice, normalize, optionally degrade, colorize and resize one case."""
    modality = config.modality or spec.modality
    vol = load_nifti(spec.image_path, modality)
    seg = load_nifti(spec.gt_seg_path, Modality.SEG)
    z = middle_slice_index(vol) if spec.slice_index == "middle" else int(spec.slice_index)
    if seg.dims != vol.dims:
        raise DimMismatch(f"image dims {vol.dims} != segmentation dims {seg.dims}")
    norm = normalize_intensity(extract_axial_slice(vol, z))
    native_gt = extract_label_mask(extract_axial_mask(seg, z), config.labels)

    snr = spec.snr if spec.snr is not None else config.snr
    seed = None
    if snr is not None:
        seed = spec.seed if spec.seed is not None else case_seed(config.seed, index)
        signal = native_gt if native_gt.any() else norm > 0
        if not signal.any():
            raise EmptyRegion("no signal region to calibrate noise (empty label mask and blank slice)")
        norm = add_gaussian_noise(norm, signal, NoiseSpec(snr, seed, config.clamp))
    image = resize_image(colorize(norm), PIPELINE_SIZE)
    gt = resize_mask(native_gt, PIPELINE_SIZE)
    return PreparedCase(spec.case_id, image, gt, native_gt, snr, seed)


BackendFactory = Callable[[np.ndarray], tuple[DetectorBackend, SegmenterBackend]]


def build_backends(config: BatchConfig) -> tuple[BackendFactory, dict]:
    """Resolve backend descriptors once; returns a per-case factory and load info.

    Descriptors: detector ``oracle`` | ``model:<manifest>``; segmenter
    ``region-grow:<tol>`` | ``oracle`` | ``model:<manifest>``.
    """
    info = {"warmup_ms": 0.0}
    shared_det = shared_seg = None
    if config.detector.startswith("model:"):
        from .models import model_backend
        shared_det = model_backend(config.detector[len("model:"):], task="detector")
        info["warmup_ms"] += shared_det.load_ms
    elif config.detector != "oracle":
        raise ValueError(f"unknown detector descriptor {config.detector!r}")

    if config.segmenter.startswith("model:"):
        from .models import model_backend
        shared_seg = model_backend(config.segmenter[len("model:"):], task="segmenter")
        info["warmup_ms"] += shared_seg.load_ms
    elif config.segmenter.startswith("region-grow:"):
        shared_seg = RegionGrowSegmenter(float(config.segmenter.split(":", 1)[1]))
    elif config.segmenter != "oracle":
        raise ValueError(f"unknown segmenter descriptor {config.segmenter!r}")

    def factory(gt: np.ndarray):
        if shared_det is not None:
            det = shared_det
        elif gt.any():
            det = OracleDetector(gt, config.per_component)
        else:
            det = EmptyDetector()
        seg = shared_seg if shared_seg is not None else MaskSegmenter(gt)
        return det, seg

    info["detector"] = shared_det.name if shared_det is not None else "oracle"
    info["segmenter"] = shared_seg.name if shared_seg is not None else "oracle"
    return factory, info


def evaluate_batch(
    cases: Sequence[CaseSpec] | str | Path,
    config: BatchConfig = BatchConfig(),
    out_dir: str | Path | None = None,
    run_id: str | None = None,
) -> Report:
    """Evaluate every case; misses are data, per-case errors are collected.

    Cases are ordered by ``case_id``; the noise seed of case ``i`` in that
    order is ``config.seed + i`` unless the manifest pins one. With
    ``config.strict`` the first case failure is raised as ``CaseError``.
    """
    if isinstance(cases, (str, Path)):
        cases = load_case_manifest(cases)
    if not cases:
        raise CaseManifestError("no cases to evaluate")
    cases = sorted(cases, key=lambda c: c.case_id)
    factory, info = build_backends(config)
    digest = config_digest({"config": config.digest(), "cases": [
        {k: str(v) for k, v in asdict(c).items()} for c in cases]})
    run_id = run_id or f"run-{digest[:12]}"
    overlay_dir = Path(out_dir) / "overlays" / run_id if (out_dir and config.overlays) else None

    def one(i: int):
        spec = cases[i]
        try:
            prep = prepare_case(spec, config, i)
            det, seg = factory(prep.gt)
            row, pred = evaluate_case(
                prep.gt, prep.image, det, seg, config.threshold, spec.case_id,
                prep.snr, prep.seed, prep.native_gt if config.eval_native else None,
            )
        except (DataError, BackendError, ValueError) as exc:
            if config.strict:
                raise CaseError(spec.case_id, exc) from exc
            log.warning("case %s skipped: %s", spec.case_id, exc)
            kind = "backend" if isinstance(exc, BackendError) else "data"
            return None, {"case_id": spec.case_id, "kind": kind, "error": f"{type(exc).__name__}: {exc}"}
        if overlay_dir is not None:
            save_rgb_png(render_overlay(prep.image, pred, prep.gt), overlay_dir / f"{spec.case_id}.png")
        return row, None

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(one, range(len(cases))))
    else:
        outcomes = [one(i) for i in range(len(cases))]

    run = {
        "run_id": run_id,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config_digest": digest,
        "config": {k: v for k, v in asdict(config).items() if k != "jobs"},
        "prng": PRNG_NAME,
        "numpy_version": np.__version__,
        "detector": info["detector"],
        "segmenter": info["segmenter"],
        "warmup_ms": info["warmup_ms"],
        "pipeline_size": list(PIPELINE_SIZE),
    }
    report = Report(
        run,
        [r for r, _ in outcomes if r is not None],
        [f for _, f in outcomes if f is not None],
    )
    if out_dir is not None:
        report.write(out_dir)
    return report
