"""Per-case results, batch aggregates, and JSON/CSV report files."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

SCHEMA_VERSION = 1
TIMING_FIELDS = ("detect_ms", "segment_ms", "total_ms")


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    dice: float
    detect_ms: float
    segment_ms: float
    total_ms: float
    detection_missed: bool
    bbox_iou_vs_gt: float | None = None
    snr_used: float | None = None
    seed_used: int | None = None
    bbox: list[int] | None = None
    prompt: list[int] | None = None

    def to_row(self) -> dict:
        return asdict(self)


CSV_COLUMNS = [f.name for f in fields(CaseResult)]


def aggregate(rows: list[CaseResult]) -> dict:
    """Summary statistics; dice_std is the population standard deviation."""
    if not rows:
        return {"n_cases": 0, "miss_count": 0}
    dice = [r.dice for r in rows]
    out = {
        "n_cases": len(rows),
        "dice_mean": math.fsum(dice) / len(dice),
        "dice_median": statistics.median(dice),
        "dice_std": statistics.pstdev(dice),
        "miss_count": sum(r.detection_missed for r in rows),
    }
    for name in TIMING_FIELDS:
        vals = [getattr(r, name) for r in rows]
        out[f"{name}_mean"] = math.fsum(vals) / len(vals)
    return out


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Report:
    run: dict
    cases: list[CaseResult]
    failures: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.cases = sorted(self.cases, key=lambda r: r.case_id)
        self.failures = sorted(self.failures, key=lambda f: f["case_id"])

    @property
    def aggregates(self) -> dict:
        return aggregate(self.cases)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "run": self.run,
            "conventions": {
                "dice_empty_vs_empty": 1.0,
                "dice_empty_vs_nonempty": 0.0,
                "bbox": "[row_min, col_min, row_max, col_max] inclusive",
                "prompt": "[row, col]",
            },
            "cases": [r.to_row() for r in self.cases],
            "failures": self.failures,
            "aggregates": self.aggregates,
        }

    def write(self, out_dir: str | Path, stem: str = "report") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        csv_path = out_dir / f"{stem}.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for r in self.cases:
                row = r.to_row()
                for key in ("bbox", "prompt"):
                    row[key] = "" if row[key] is None else " ".join(map(str, row[key]))
                writer.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v)
                                 for k, v in row.items()})
        return json_path, csv_path


def data_fields(report: dict) -> dict:
    """Report content with timings, timestamps, and warmup removed.

    Two runs over the same inputs and configuration must agree on this view.
    """
    run = {k: v for k, v in report["run"].items() if k not in ("timestamp", "warmup_ms")}
    cases = [{k: v for k, v in c.items() if k not in TIMING_FIELDS} for c in report["cases"]]
    aggs = {k: v for k, v in report["aggregates"].items()
            if not any(k.startswith(t) for t in TIMING_FIELDS)}
    return {**report, "run": run, "cases": cases, "aggregates": aggs}


def read_csv_rows(path: str | Path) -> list[CaseResult]:
    def num(v, cast=float):
        return None if v == "" else cast(v)

    def ints(v):
        return None if v == "" else [int(x) for x in v.split()]

    rows = []
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append(CaseResult(
                case_id=r["case_id"],
                dice=float(r["dice"]),
                detect_ms=float(r["detect_ms"]),
                segment_ms=float(r["segment_ms"]),
                total_ms=float(r["total_ms"]),
                detection_missed=r["detection_missed"] == "True",
                bbox_iou_vs_gt=num(r["bbox_iou_vs_gt"]),
                snr_used=num(r["snr_used"]),
                seed_used=num(r["seed_used"], int),
                bbox=ints(r["bbox"]),
                prompt=ints(r["prompt"]),
            ))
    return rows
