"""ONNX model backends described by a JSON sidecar manifest.

Manifest layout::

    {
      "task": "detector" | "segmenter",
      "model": "yolo.onnx",                  # relative to the manifest file
      "inputs": {
        "image": {"name": "images", "shape": [1, 3, 640, 640], "layout": "NCHW",
                  "scale": 0.00392156862745098, "mean": [0, 0, 0], "std": [1, 1, 1]},
        "point": {"name": "point_coords"},   # segmenter only
        "point_label": {"name": "point_labels"}   # optional
      },
      "outputs": {
        "boxes": {"name": "boxes", "format": "corners" | "inclusive"},
        "scores": {"name": "scores"},
        "classes": {"name": "classes"},      # optional
        "probs": {"name": "masks", "activation": "none" | "sigmoid"}
      },
      "coords": "xy" | "rowcol",
      "score_cutoff": 0.25,
      "thread_safe": true
    }

Boxes are ``(N, 4)`` tensors ordered per ``coords``; with ``format=corners``
they are continuous pixel-edge coordinates, with ``inclusive`` they are
pixel indices. Input images are resized to the model's declared spatial
size and all coordinates are rescaled across that boundary.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np

from .errors import ModelLoadError, ModelManifestError, ShapeMismatch
from .geometry import BBox, PromptPoint
from .pipeline import Detection, DetectorBackend, SegmenterBackend
from .preprocess import resize_bilinear

_DETECTOR_OUTPUTS = ("boxes", "scores")


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ModelManifestError(f"manifest not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelManifestError(f"unreadable manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ModelManifestError(f"{path}: manifest must be a JSON object")
    _validate(manifest, path)
    manifest["_base"] = str(path.parent)
    return manifest


def _binding(section: dict, key: str, where: str) -> dict:
    b = section.get(key)
    if not isinstance(b, dict) or not isinstance(b.get("name"), str):
        raise ModelManifestError(f"{where}: missing '{key}' tensor binding")
    return b


def _validate(m: dict, where) -> None:
    task = m.get("task")
    if task not in ("detector", "segmenter"):
        raise ModelManifestError(f"{where}: 'task' must be 'detector' or 'segmenter'")
    if not isinstance(m.get("model"), str):
        raise ModelManifestError(f"{where}: missing 'model' path")
    if m.get("coords", "xy") not in ("xy", "rowcol"):
        raise ModelManifestError(f"{where}: 'coords' must be 'xy' or 'rowcol'")
    inputs, outputs = m.get("inputs"), m.get("outputs")
    if not isinstance(inputs, dict) or not isinstance(outputs, dict):
        raise ModelManifestError(f"{where}: 'inputs' and 'outputs' objects are required")
    image = _binding(inputs, "image", where)
    shape = image.get("shape")
    if not (isinstance(shape, list) and len(shape) == 4):
        raise ModelManifestError(f"{where}: image binding needs a 4D 'shape'")
    if image.get("layout", "NCHW") not in ("NCHW", "NHWC"):
        raise ModelManifestError(f"{where}: image layout must be NCHW or NHWC")
    if task == "detector":
        for key in _DETECTOR_OUTPUTS:
            _binding(outputs, key, where)
        if outputs["boxes"].get("format", "corners") not in ("corners", "inclusive"):
            raise ModelManifestError(f"{where}: boxes format must be 'corners' or 'inclusive'")
        cutoff = m.get("score_cutoff", 0.25)
        if not isinstance(cutoff, (int, float)) or not 0 <= cutoff <= 1:
            raise ModelManifestError(f"{where}: score_cutoff must be in [0, 1]")
    else:
        _binding(inputs, "point", where)
        _binding(outputs, "probs", where)
        if outputs["probs"].get("activation", "none") not in ("none", "sigmoid"):
            raise ModelManifestError(f"{where}: probs activation must be 'none' or 'sigmoid'")


class _OnnxModel:
    def __init__(self, manifest: dict):
        self.manifest = manifest
        model_path = Path(manifest["_base"]) / manifest["model"]
        try:
            import onnxruntime as ort
        except ImportError as exc:
            raise ModelLoadError("onnxruntime is not installed (pip install onnxruntime)") from exc
        if not model_path.is_file():
            raise ModelLoadError(f"model file not found: {model_path}")
        t0 = time.perf_counter_ns()
        try:
            opts = ort.SessionOptions()
            opts.log_severity_level = 3
            self.session = ort.InferenceSession(str(model_path), opts, providers=["CPUExecutionProvider"])
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_path}: {exc}") from exc
        self.load_ms = (time.perf_counter_ns() - t0) / 1e6
        self.model_name = model_path.name
        self.thread_safe = bool(manifest.get("thread_safe", True))
        self.rowcol = manifest.get("coords", "xy") == "rowcol"

        known_in = {i.name for i in self.session.get_inputs()}
        known_out = {o.name for o in self.session.get_outputs()}
        for b in manifest["inputs"].values():
            if b["name"] not in known_in:
                raise ModelManifestError(f"model has no input tensor named '{b['name']}'")
        for b in manifest["outputs"].values():
            if b["name"] not in known_out:
                raise ModelManifestError(f"model has no output tensor named '{b['name']}'")

        img = manifest["inputs"]["image"]
        self.layout = img.get("layout", "NCHW")
        shape = img["shape"]
        if self.layout == "NCHW":
            self.channels, self.in_h, self.in_w = shape[1], shape[2], shape[3]
        else:
            self.in_h, self.in_w, self.channels = shape[1], shape[2], shape[3]
        self.scale = float(img.get("scale", 1.0 / 255.0))
        self.mean = np.asarray(img.get("mean", [0.0]), dtype=np.float64)
        self.std = np.asarray(img.get("std", [1.0]), dtype=np.float64)

    def model_size(self, shape: tuple[int, int]) -> tuple[int, int]:
        h = self.in_h if isinstance(self.in_h, int) and self.in_h > 0 else shape[0]
        w = self.in_w if isinstance(self.in_w, int) and self.in_w > 0 else shape[1]
        return h, w

    def image_tensor(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        size = self.model_size(img.shape[:2])
        if img.shape[:2] != size:
            img = resize_bilinear(img, size)
        if self.channels == 1:
            img = img.mean(axis=2, keepdims=True)
        elif isinstance(self.channels, int) and self.channels not in (-1, img.shape[2]):
            raise ShapeMismatch(f"model expects {self.channels} channels, image has {img.shape[2]}")
        x = (img * self.scale - self.mean) / self.std
        x = x.transpose(2, 0, 1) if self.layout == "NCHW" else x
        return x[None].astype(np.float32)

    def run(self, feeds: dict) -> dict:
        names = [b["name"] for b in self.manifest["outputs"].values()]
        try:
            values = self.session.run(names, feeds)
        except Exception as exc:
            raise ShapeMismatch(f"inference failed for {self.model_name}: {exc}") from exc
        return dict(zip(self.manifest["outputs"].keys(), values))


class OnnxDetector(DetectorBackend):
    def __init__(self, manifest: dict):
        self.model = _OnnxModel(manifest)
        self.thread_safe = self.model.thread_safe
        self.score_cutoff = float(manifest.get("score_cutoff", 0.25))
        self.box_format = manifest["outputs"]["boxes"].get("format", "corners")
        self.name = f"model:{self.model.model_name}"
        self.load_ms = self.model.load_ms

    def _to_bbox(self, box: np.ndarray, sy: float, sx: float, shape) -> BBox | None:
        if self.model.rowcol:
            r0, c0, r1, c1 = box
        else:
            c0, r0, c1, r1 = box
        r0, r1, c0, c1 = r0 * sy, r1 * sy, c0 * sx, c1 * sx
        if self.box_format == "corners":
            rows = (math.floor(r0), math.ceil(r1) - 1)
            cols = (math.floor(c0), math.ceil(c1) - 1)
        else:
            rows = (round(r0), round(r1))
            cols = (round(c0), round(c1))
        row_min, row_max = max(rows[0], 0), min(rows[1], shape[0] - 1)
        col_min, col_max = max(cols[0], 0), min(cols[1], shape[1] - 1)
        if row_min > row_max or col_min > col_max:
            return None
        return BBox(row_min, col_min, row_max, col_max)

    def detect(self, image):
        shape = np.asarray(image).shape[:2]
        x = self.model.image_tensor(image)
        out = self.model.run({self.model.manifest["inputs"]["image"]["name"]: x})
        boxes = np.asarray(out["boxes"], dtype=np.float64).reshape(-1, 4)
        scores = np.asarray(out["scores"], dtype=np.float64).reshape(-1)
        if len(scores) != len(boxes):
            raise ShapeMismatch(f"{len(boxes)} boxes but {len(scores)} scores")
        classes = np.zeros(len(scores), dtype=np.int64)
        if "classes" in out:
            classes = np.asarray(out["classes"]).reshape(-1).astype(np.int64)
        mh, mw = self.model.model_size(shape)
        sy, sx = shape[0] / mh, shape[1] / mw
        dets = []
        for box, score, cls in zip(boxes, scores, classes):
            if not np.isfinite(score) or score < self.score_cutoff:
                continue
            b = self._to_bbox(box, sy, sx, shape)
            if b is not None:
                dets.append(Detection(b, float(min(max(score, 0.0), 1.0)), int(cls)))
        return dets


class OnnxSegmenter(SegmenterBackend):
    def __init__(self, manifest: dict):
        self.model = _OnnxModel(manifest)
        self.thread_safe = self.model.thread_safe
        self.sigmoid = manifest["outputs"]["probs"].get("activation", "none") == "sigmoid"
        self.name = f"model:{self.model.model_name}"
        self.load_ms = self.model.load_ms

    def segment(self, image, prompt: PromptPoint):
        shape = np.asarray(image).shape[:2]
        mh, mw = self.model.model_size(shape)
        # pixel centres map across the resize boundary
        r = (prompt.row + 0.5) * mh / shape[0] - 0.5
        c = (prompt.col + 0.5) * mw / shape[1] - 0.5
        point = [r, c] if self.model.rowcol else [c, r]
        inputs = self.model.manifest["inputs"]
        feeds = {
            inputs["image"]["name"]: self.model.image_tensor(image),
            inputs["point"]["name"]: np.asarray([point], dtype=np.float32),
        }
        if "point_label" in inputs:
            feeds[inputs["point_label"]["name"]] = np.asarray([1], dtype=np.float32)
        probs = np.asarray(self.model.run(feeds)["probs"], dtype=np.float64)
        probs = probs.reshape(probs.shape[-2:]) if probs.size == np.prod(probs.shape[-2:]) else probs
        if probs.ndim != 2:
            raise ShapeMismatch(f"segmenter must emit a single 2D map, got shape {probs.shape}")
        if self.sigmoid:
            probs = 1.0 / (1.0 + np.exp(-probs))
        if probs.shape != shape:
            probs = resize_bilinear(probs, shape)
        return np.clip(probs, 0.0, 1.0)


def model_backend(descriptor: str | Path | dict, task: str | None = None):
    """Build a detector or segmenter from a manifest path (or parsed manifest)."""
    if isinstance(descriptor, dict):
        manifest = dict(descriptor)
        _validate(manifest, "manifest")
        manifest.setdefault("_base", ".")
    else:
        manifest = load_manifest(descriptor)
    if task is not None and manifest["task"] != task:
        raise ModelManifestError(f"expected a {task} manifest, got task '{manifest['task']}'")
    if manifest["task"] == "detector":
        return OnnxDetector(manifest)
    return OnnxSegmenter(manifest)
