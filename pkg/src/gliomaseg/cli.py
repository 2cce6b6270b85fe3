"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend failure.
Every output path is resolved under the output root (``--out-root``, else
``$GLIOMASEG_OUTPUT_ROOT``, else the working directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import PRNG_NAME, NoiseSpec, augment_dataset, case_seed
from .errors import BackendError, CaseError, DataError, EmptyRegion, GliomaSegError, UsageError
from .evaluate import (
    BatchConfig,
    CaseSpec,
    evaluate_batch,
    load_case_manifest,
    phantom_suite,
    render_overlay,
    write_phantom_dataset,
)
from .ingest import (
    Modality,
    extract_axial_mask,
    extract_axial_slice,
    infer_modality,
    load_nifti,
    middle_slice_index,
)
from .pipeline import DEFAULT_THRESHOLD
from .preprocess import (
    PIPELINE_SIZE,
    colorize,
    extract_label_mask,
    load_mask_png,
    load_rgb_png,
    normalize_intensity,
    resize_image,
    resize_mask,
    save_mask_png,
    save_rgb_png,
)
from .report import config_digest

log = logging.getLogger("gliomaseg")

OUTPUT_ROOT_ENV = "GLIOMASEG_OUTPUT_ROOT"

EPILOG = """\
Coordinates are (row, col) with row 0 at the top of the image. Boxes are
[row_min, col_min, row_max, col_max] with inclusive bounds; the segmenter
prompt is the box centre, floor((min+max)/2) on each axis. Model backends
convert to the (x, y) order declared in their manifest.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 backend failure.
Output paths are resolved under --out-root (default $GLIOMASEG_OUTPUT_ROOT,
else the current directory) and may not escape it.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (v > 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _unit_interval(text: str) -> float:
    v = _positive_float(text)
    if not v < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return v


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"must be an unsigned 64-bit integer, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _labels(text: str) -> tuple[int, ...]:
    try:
        labels = tuple(sorted({int(t) for t in text.split(",") if t.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not labels or min(labels) < 1:
        raise argparse.ArgumentTypeError("label set must be non-empty positive integers")
    return labels


def _detector(text: str) -> str:
    if text == "oracle" or (text.startswith("model:") and len(text) > 6):
        return text
    raise argparse.ArgumentTypeError(f"expected 'oracle' or 'model:<manifest>', got {text!r}")


def _segmenter(text: str) -> str:
    if text == "oracle" or (text.startswith("model:") and len(text) > 6):
        return text
    if text.startswith("region-grow:"):
        _positive_float(text.split(":", 1)[1])
        return text
    raise argparse.ArgumentTypeError(
        f"expected 'region-grow:<tol>', 'oracle' or 'model:<manifest>', got {text!r}")


def _slice_index(text: str) -> int | str:
    if text == "middle":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'middle' or an index, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError("slice index must be non-negative")
    return v


def _modality(text: str) -> str:
    try:
        return Modality(text.upper()).value
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown modality {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gliomaseg",
        description="Simulated-ioMRI glioma segmentation: phantoms, noise augmentation, "
                    "detect-then-segment runs and Dice/latency evaluation.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = _Parser(add_help=False)
    common.add_argument("--out-root", help=f"output root directory (default ${OUTPUT_ROOT_ENV} or cwd)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")

    backends = _Parser(add_help=False)
    backends.add_argument("--detector", type=_detector, default="oracle",
                          help="oracle (ground-truth box) or model:<manifest.json> (default: oracle)")
    backends.add_argument("--segmenter", type=_segmenter, default="region-grow:0.2",
                          help="region-grow:<tol>, oracle (returns GT) or model:<manifest.json> "
                               "(default: region-grow:0.2)")
    backends.add_argument("--threshold", type=_unit_interval, default=DEFAULT_THRESHOLD,
                          help="probability threshold, mask = prob >= t (default: 0.5)")
    backends.add_argument("--snr", type=_positive_float, help="degrade inputs to this SNR before inference")
    backends.add_argument("--seed", type=_u64, default=0, help="base noise seed (default: 0)")
    backends.add_argument("--clamp", action=argparse.BooleanOptionalAction, default=True,
                          help="clip noisy slices to [0, 1] (default: on)")
    backends.add_argument("--labels", type=_labels, default=(4,),
                          help="comma-separated label set scored as foreground (default: 4, enhancing tumor)")
    backends.add_argument("--modality", type=_modality, help="override the modality inferred from file names")
    backends.add_argument("--per-component", action="store_true",
                          help="oracle detector proposes one box per connected component")
    backends.add_argument("--eval-native", action="store_true",
                          help="score at native slice resolution instead of 256x256")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", parents=[common], help="generate synthetic disk cases")
    p.add_argument("--count", type=_positive_int, required=True, help="number of cases")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=_u64, default=0, help="placement seed (default: 0)")
    p.add_argument("--size", type=_positive_int, default=PIPELINE_SIZE[0], help="image side length (default: 256)")

    p = sub.add_parser("augment", parents=[common], help="write noise-degraded slices")
    p.add_argument("--input", required=True, help="directory holding manifest.json, or a manifest file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--snr", type=_positive_float, required=True, help="target SNR")
    p.add_argument("--seed", type=_u64, default=0, help="base seed; case i uses seed+i (default: 0)")
    p.add_argument("--clamp", action=argparse.BooleanOptionalAction, default=True,
                   help="clip to [0, 1] (default: on)")
    p.add_argument("--labels", type=_labels, default=(4,), help="signal label set (default: 4)")
    p.add_argument("--modality", type=_modality, help="override the modality inferred from file names")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default: 1)")

    p = sub.add_parser("run", parents=[common, backends], help="evaluate a single case")
    p.add_argument("--image", required=True, help="image volume (.nii/.nii.gz)")
    p.add_argument("--gt", required=True, help="segmentation volume (.nii/.nii.gz)")
    p.add_argument("--slice", type=_slice_index, default="middle", help="axial index or 'middle' (default)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", parents=[common, backends], help="evaluate a case manifest")
    p.add_argument("--manifest", required=True, help="case manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel cases (default: 1)")
    p.add_argument("--strict", action="store_true", help="abort on the first failing case")
    p.add_argument("--overlays", action="store_true", help="write boundary overlay PNGs")

    p = sub.add_parser("overlay", parents=[common], help="render prediction/ground-truth boundaries")
    p.add_argument("--image", required=True, help="RGB PNG")
    p.add_argument("--pred", required=True, help="predicted mask PNG")
    p.add_argument("--gt", required=True, help="ground-truth mask PNG")
    p.add_argument("--out", required=True, help="output PNG file")
    return parser


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    @property
    def config_digest(self) -> str:
        return config_digest({"command": self.command,
                              **{k: v for k, v in self.params.items() if k not in ("jobs", "verbose")}})


def _resolve_out(root: Path, out: str) -> str:
    path = (root / out).resolve()
    if path != root and root not in path.parents:
        raise UsageError(f"--out {out!r} escapes the output root {root}")
    return str(path)


def parse_args(argv: list[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    params = vars(args).copy()
    command = params.pop("command")
    root = Path(params.pop("out_root") or os.environ.get(OUTPUT_ROOT_ENV) or ".").resolve()
    params["out_root"] = str(root)
    params["out"] = _resolve_out(root, params["out"])
    for key in ("input", "manifest", "image", "gt", "pred"):
        if key in params:
            params[key] = str(Path(params[key]).resolve())
    if "labels" in params:
        params["labels"] = list(params["labels"])
    return RunConfig(command, params)


def _batch_config(p: dict, **overrides) -> BatchConfig:
    cfg = dict(
        detector=p["detector"], segmenter=p["segmenter"], threshold=p["threshold"], snr=p["snr"],
        seed=p["seed"], clamp=p["clamp"], labels=tuple(p["labels"]), per_component=p["per_component"],
        eval_native=p["eval_native"], modality=p["modality"],
    )
    cfg.update(overrides)
    return BatchConfig(**cfg)


def _cmd_phantom(p: dict) -> None:
    cases = phantom_suite(p["count"], seed=p["seed"], size=(p["size"], p["size"]),
                          radius_range=(p["size"] * 0.05, p["size"] * 0.15))
    manifest = write_phantom_dataset(cases, p["out"])
    log.info("wrote %d phantom cases, manifest %s", len(cases), manifest)


def _cmd_augment(p: dict) -> None:
    src = Path(p["input"])
    specs = sorted(load_case_manifest(src / "manifest.json" if src.is_dir() else src),
                   key=lambda c: c.case_id)
    cases, gts = [], []
    for spec in specs:
        vol = load_nifti(spec.image_path, p["modality"] or spec.modality)
        seg = load_nifti(spec.gt_seg_path, Modality.SEG)
        z = middle_slice_index(vol) if spec.slice_index == "middle" else int(spec.slice_index)
        norm = normalize_intensity(extract_axial_slice(vol, z))
        gt = extract_label_mask(extract_axial_mask(seg, z), p["labels"])
        signal = gt if gt.any() else norm > 0
        if not signal.any():
            raise EmptyRegion(f"case {spec.case_id}: no signal region to calibrate noise")
        cases.append((norm, signal))
        gts.append(gt)
    noise = NoiseSpec(p["snr"], p["seed"], p["clamp"])
    noisy = augment_dataset(cases, noise, jobs=p["jobs"])

    out = Path(p["out"])
    out.mkdir(parents=True, exist_ok=True)
    for spec, x, gt in zip(specs, noisy, gts):
        np.save(out / f"{spec.case_id}.npy", x)
        save_rgb_png(resize_image(colorize(x), PIPELINE_SIZE), out / f"{spec.case_id}.png")
        save_mask_png(resize_mask(gt, PIPELINE_SIZE), out / f"{spec.case_id}_mask.png")
    meta = {
        "prng": PRNG_NAME,
        "snr": p["snr"],
        "clamp": p["clamp"],
        "base_seed": p["seed"],
        "cases": [{"case_id": s.case_id, "seed": case_seed(p["seed"], i)} for i, s in enumerate(specs)],
    }
    (out / "augment.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("augmented %d cases at SNR %g into %s", len(specs), p["snr"], out)


def _cmd_run(p: dict) -> None:
    image = Path(p["image"])
    case_id = image.name.split(".nii")[0]
    spec = CaseSpec(case_id, image, Path(p["gt"]), p["modality"] or infer_modality(image).value, p["slice"])
    config = _batch_config(p, strict=True, overlays=True, modality=p["modality"])
    report = evaluate_batch([spec], config, p["out"])
    row = report.cases[0]
    log.info("%s: dice=%.4f missed=%s total=%.1f ms", row.case_id, row.dice, row.detection_missed, row.total_ms)


def _cmd_eval(p: dict) -> None:
    config = _batch_config(p, strict=p["strict"], jobs=p["jobs"], overlays=p["overlays"])
    report = evaluate_batch(p["manifest"], config, p["out"])
    agg = report.aggregates
    if agg["n_cases"]:
        log.info("%d cases: mean dice %.4f, median %.4f, misses %d, failures %d",
                 agg["n_cases"], agg["dice_mean"], agg["dice_median"], agg["miss_count"],
                 len(report.failures))
    else:
        log.warning("no case could be evaluated (%d failures)", len(report.failures))


def _cmd_overlay(p: dict) -> None:
    image = load_rgb_png(p["image"])
    out = render_overlay(image, load_mask_png(p["pred"]), load_mask_png(p["gt"]))
    save_rgb_png(out, p["out"])


COMMANDS = {
    "phantom": _cmd_phantom,
    "augment": _cmd_augment,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "overlay": _cmd_overlay,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, CaseError):
        return exit_code(exc.cause)
    if isinstance(exc, UsageError):
        return 1
    if isinstance(exc, BackendError):
        return 3
    if isinstance(exc, (DataError, OSError, ValueError, GliomaSegError)):
        return 2
    raise exc


def main(config: RunConfig) -> int:
    logging.basicConfig(level=logging.DEBUG if config.params.get("verbose") else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[config.command](config.params)
    except Exception as exc:
        code = exit_code(exc)
        log.error("%s", exc)
        return code
    return 0


def run(argv: list[str] | None = None) -> int:
    try:
        config = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    return main(config)


if __name__ == "__main__":
    sys.exit(run())
