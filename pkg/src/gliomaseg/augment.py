"""Simulated intraoperative MRI: Gaussian degradation to a target SNR.

SNR is taken as mean foreground signal over the population standard
deviation of a background region. Injected noise uses
``sigma = mean(foreground) / target_snr``; any noise already present in the
clean slice is ignored.

Random draws come from numpy's PCG64 bit generator seeded with the 64-bit
case seed, so an augmented slice is fully determined by (slice, spec).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import CaseError, EmptyRegion, NonNormalizedInput, ZeroBackgroundVariance

PRNG_NAME = "numpy.random.PCG64"
_U64 = 1 << 64


@dataclass(frozen=True)
class NoiseSpec:
    target_snr: float
    seed: int = 0
    clamp: bool = True

    def __post_init__(self):
        if not self.target_snr > 0:
            raise ValueError(f"target_snr must be positive, got {self.target_snr}")
        if not 0 <= int(self.seed) < _U64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) % _U64))


def _region(slice_: np.ndarray, region: np.ndarray, name: str) -> np.ndarray:
    region = np.asarray(region, dtype=bool)
    if region.shape != slice_.shape:
        raise ValueError(f"{name} mask shape {region.shape} does not match slice {slice_.shape}")
    if not region.any():
        raise EmptyRegion(f"{name} region is empty")
    return slice_[region]


def estimate_snr(slice_: np.ndarray, foreground: np.ndarray, background: np.ndarray) -> float:
    x = np.asarray(slice_, dtype=np.float64)
    fg = _region(x, foreground, "foreground")
    bg = _region(x, background, "background")
    if np.any(np.asarray(foreground, bool) & np.asarray(background, bool)):
        raise ValueError("foreground and background regions overlap")
    sd = float(bg.std())
    if sd == 0.0:
        raise ZeroBackgroundVariance("background has zero variance; SNR undefined")
    return float(fg.mean()) / sd


def noise_sigma(slice_: np.ndarray, foreground: np.ndarray, target_snr: float) -> float:
    fg = _region(np.asarray(slice_, dtype=np.float64), foreground, "foreground")
    return float(fg.mean()) / float(target_snr)


def add_gaussian_noise(slice_: np.ndarray, foreground: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    x = np.asarray(slice_, dtype=np.float64)
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise NonNormalizedInput("slice must be normalized to [0, 1] before adding noise")
    sigma = noise_sigma(x, foreground, spec.target_snr)
    out = x + rng_for(spec.seed).standard_normal(x.shape) * sigma
    if spec.clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def case_seed(base: int, index: int) -> int:
    return (int(base) + int(index)) % _U64


def augment_dataset(
    cases: Sequence[tuple[np.ndarray, np.ndarray]], spec: NoiseSpec, jobs: int = 1
) -> list[np.ndarray]:
    """Degrade every (slice, foreground) pair; case ``i`` uses seed ``spec.seed + i``."""
    if not cases:
        raise ValueError("no cases to augment")

    def one(i: int) -> np.ndarray:
        slice_, fg = cases[i]
        try:
            return add_gaussian_noise(slice_, fg, replace(spec, seed=case_seed(spec.seed, i)))
        except Exception as exc:
            raise CaseError(i, exc) from exc

    if jobs <= 1:
        return [one(i) for i in range(len(cases))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(len(cases))))
