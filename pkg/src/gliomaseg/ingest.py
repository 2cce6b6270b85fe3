"""NIfTI-1 volume loading and axial slice extraction.

Volumes are held as ``(nx, ny, nz)`` arrays; the flat voxel order is x-fastest.
Slices follow the (row, col) image convention: pixel ``(row=y, col=x)`` of the
slice at ``z`` is voxel ``(x, y, z)``. All indices are zero-based, so the
middle slice of a 155-slice BraTS volume is index 77.
"""

from __future__ import annotations

import enum
import gzip
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import nibabel as nib
import numpy as np

from .errors import (
    DimensionalityError,
    IndexOutOfRange,
    MalformedHeader,
    NiftiNotFound,
    UnknownLabel,
    UnsupportedDatatype,
    WrongModality,
)

SUPPORTED_DTYPES = (np.uint8, np.int16, np.uint16, np.float32, np.float64)

# BraTS 2021 annotation labels
BRATS_LABELS: dict[int, str] = {1: "necrotic tumor core", 2: "peritumoral edema", 4: "enhancing tumor"}
ET_LABELS = frozenset({4})


class Modality(str, enum.Enum):
    T1 = "T1"
    T1CE = "T1CE"
    T2 = "T2"
    FLAIR = "FLAIR"
    SEG = "SEG"
    UNKNOWN = "UNKNOWN"


_SUFFIX_RE = re.compile(r"_(t1ce|t1|t2|flair|seg)\.nii(\.gz)?$", re.IGNORECASE)


def infer_modality(path: str | Path) -> Modality:
    """Modality from the BraTS filename suffix (``*_t1ce.nii.gz`` etc.)."""
    m = _SUFFIX_RE.search(Path(path).name)
    return Modality(m.group(1).upper()) if m else Modality.UNKNOWN


@dataclass(frozen=True)
class Volume:
    data: np.ndarray  # shape (nx, ny, nz)
    spacing: tuple[float, float, float]
    modality: Modality = Modality.UNKNOWN

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DimensionalityError(f"volume must be 3D and non-empty, got shape {data.shape}")
        if len(self.spacing) != 3 or not all(float(s) > 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        if self.modality is Modality.SEG:
            if not np.all(np.isfinite(data)) or np.any(data < 0) or np.any(data != np.round(data)):
                raise ValueError("SEG volume must hold non-negative integer labels")
        data = data.copy() if data.flags.writeable else data
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        # NIfTI stores pixdim as float32; keep spacing at that precision
        object.__setattr__(self, "spacing", tuple(float(np.float32(s)) for s in self.spacing))
        object.__setattr__(self, "modality", Modality(self.modality))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def voxels(self) -> np.ndarray:
        """Flat voxel array, x fastest."""
        return self.data.ravel(order="F")


@dataclass(frozen=True)
class LabelMask:
    labels: np.ndarray  # (height, width) non-negative integers
    semantics: Mapping[int, str] = field(default_factory=lambda: dict(BRATS_LABELS))

    def __post_init__(self):
        labels = np.asarray(self.labels)
        present = {int(v) for v in np.unique(labels)} - {0}
        unknown = present - set(self.semantics)
        if unknown:
            raise UnknownLabel(f"labels {sorted(unknown)} not declared in label semantics")
        object.__setattr__(self, "labels", labels.astype(np.int64, copy=False))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def _check_header(path: Path) -> None:
    opener = gzip.open if path.name.endswith(".gz") else open
    try:
        with opener(path, "rb") as fh:
            raw = fh.read(348)
    except (OSError, EOFError) as exc:
        raise MalformedHeader(f"{path}: unreadable header ({exc})") from exc
    if len(raw) < 348:
        raise MalformedHeader(f"{path}: header truncated ({len(raw)} bytes)")
    little = int.from_bytes(raw[:4], "little")
    big = int.from_bytes(raw[:4], "big")
    if 348 not in (little, big):
        raise MalformedHeader(f"{path}: sizeof_hdr is not 348 (NIfTI-2 and Analyze are unsupported)")
    if raw[344:348] not in (b"n+1\x00", b"ni1\x00"):
        raise MalformedHeader(f"{path}: missing NIfTI-1 magic")


def load_nifti(path: str | Path, modality: Modality | str | None = None) -> Volume:
    """Load a 3D NIfTI-1 file (optionally gzipped).

    The header scale slope/intercept is applied when the slope is finite and
    non-zero; otherwise the stored values are returned unchanged. Orientation
    (qform/sform) is ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise NiftiNotFound(f"no such file: {path}")
    _check_header(path)
    try:
        img = nib.Nifti1Image.from_filename(str(path))
    except Exception as exc:
        raise MalformedHeader(f"{path}: {exc}") from exc
    hdr = img.header

    dtype = hdr.get_data_dtype()
    if not any(dtype == np.dtype(t) for t in SUPPORTED_DTYPES):
        raise UnsupportedDatatype(f"{path}: datatype {dtype} (code {int(hdr['datatype'])}) is not supported")
    ndim = int(hdr["dim"][0])
    if ndim != 3:
        raise DimensionalityError(f"{path}: expected a 3D volume, header declares {ndim} dimensions")

    raw = np.asanyarray(img.dataobj.get_unscaled())
    raw = raw.astype(raw.dtype.newbyteorder("="), copy=False)
    # nibabel moves scl_slope/scl_inter onto the proxy, mapping slope 0 or NaN to (1, 0)
    slope, inter = float(img.dataobj.slope), float(img.dataobj.inter)
    if not (slope == 1 and inter == 0):
        data = raw.astype(np.float64) * slope + inter
    else:
        data = raw

    zooms = hdr.get_zooms()[:3]
    if modality is None:
        modality = infer_modality(path)
    return Volume(np.asarray(data), tuple(float(z) for z in zooms), Modality(modality))


def save_nifti(volume: Volume, path: str | Path) -> Path:
    """Write ``volume`` unscaled in its own datatype (.nii or .nii.gz by suffix)."""
    data = np.asarray(volume.data)
    if not any(data.dtype == np.dtype(t) for t in SUPPORTED_DTYPES):
        raise UnsupportedDatatype(f"cannot write datatype {data.dtype}")
    img = nib.Nifti1Image(data, affine=np.diag([*volume.spacing, 1.0]))
    img.header.set_data_dtype(data.dtype)
    img.header.set_zooms(volume.spacing)
    img.header.set_slope_inter(1.0, 0.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.to_filename(str(path))
    return path


def middle_slice_index(volume: Volume) -> int:
    return volume.dims[2] // 2


def _check_index(volume: Volume, index: int) -> int:
    nz = volume.dims[2]
    if not 0 <= index < nz:
        raise IndexOutOfRange(f"slice index {index} outside [0, {nz})")
    return int(index)


def extract_axial_slice(volume: Volume, index: int) -> np.ndarray:
    """The (ny, nx) float64 plane at z=index."""
    index = _check_index(volume, index)
    plane = np.asarray(volume.data[:, :, index], dtype=np.float64).T
    return np.ascontiguousarray(plane)


def extract_axial_mask(
    seg_volume: Volume, index: int, semantics: Mapping[int, str] | None = None
) -> LabelMask:
    if seg_volume.modality is not Modality.SEG:
        raise WrongModality(f"expected a SEG volume, got {seg_volume.modality.value}")
    index = _check_index(seg_volume, index)
    plane = np.ascontiguousarray(np.asarray(seg_volume.data[:, :, index]).T.astype(np.int64))
    return LabelMask(plane, dict(BRATS_LABELS if semantics is None else semantics))
