import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gliomaseg.augment import (
    NoiseSpec,
    add_gaussian_noise,
    augment_dataset,
    case_seed,
    estimate_snr,
    noise_sigma,
)
from gliomaseg.errors import CaseError, EmptyRegion, NonNormalizedInput, ZeroBackgroundVariance
from gliomaseg.evaluate import phantom


@pytest.fixture
def disk():
    img, fg = phantom(64, 64, (32, 32), 14, 0.8, 0.0)
    return img, fg, ~fg


def test_estimate_snr_exact():
    img = np.zeros((4, 4))
    fg = np.zeros((4, 4), bool)
    fg[:2] = True
    img[fg] = 1.0
    img[2:] = np.array([0.1, -0.1, 0.1, -0.1])
    assert estimate_snr(img, fg, ~fg) == pytest.approx(10.0, abs=1e-12)


def test_estimate_snr_zero_variance(disk):
    img, fg, bg = disk
    with pytest.raises(ZeroBackgroundVariance):
        estimate_snr(img, fg, bg)


def test_estimate_snr_empty_region(disk):
    img, fg, _ = disk
    with pytest.raises(EmptyRegion):
        estimate_snr(img, fg, np.zeros_like(fg))


def test_estimate_snr_overlapping_regions(disk):
    img, fg, _ = disk
    with pytest.raises(ValueError):
        estimate_snr(img + 0.01 * np.arange(64), fg, np.ones_like(fg))


def test_estimate_snr_monte_carlo(disk):
    img, fg, bg = disk
    sigma = 0.05
    estimates = []
    for seed in range(200):
        noisy = img + np.random.default_rng(seed).normal(0, sigma, img.shape)
        estimates.append(estimate_snr(noisy, fg, bg))
    assert 15.2 <= np.mean(estimates) <= 16.8


def test_vanishing_sigma(disk):
    img, fg, _ = disk
    out = add_gaussian_noise(img, fg, NoiseSpec(1e12, 3, clamp=False))
    assert np.max(np.abs(out - img)) < 1e-6


def test_determinism(disk):
    img, fg, _ = disk
    a = add_gaussian_noise(img, fg, NoiseSpec(10, 42))
    b = add_gaussian_noise(img, fg, NoiseSpec(10, 42))
    c = add_gaussian_noise(img, fg, NoiseSpec(10, 43))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_clamp(disk):
    img, fg, _ = disk
    out = add_gaussian_noise(img, fg, NoiseSpec(1, 0, clamp=True))
    assert out.min() >= 0.0 and out.max() <= 1.0
    raw = add_gaussian_noise(img, fg, NoiseSpec(1, 0, clamp=False))
    assert raw.min() < 0.0


def test_achieved_snr_ten(disk):
    img, fg, bg = disk
    snrs = [estimate_snr(add_gaussian_noise(img, fg, NoiseSpec(10, s, clamp=False)), fg, bg)
            for s in range(100)]
    assert 9.0 <= np.mean(snrs) <= 11.0


def test_rejects_unnormalized(disk):
    img, fg, _ = disk
    with pytest.raises(NonNormalizedInput):
        add_gaussian_noise(img * 2, fg, NoiseSpec(10))


def test_rejects_empty_foreground(disk):
    img, fg, _ = disk
    with pytest.raises(EmptyRegion):
        add_gaussian_noise(img, np.zeros_like(fg), NoiseSpec(10))


@pytest.mark.parametrize("snr", [0, -5])
def test_noise_spec_validation(snr):
    with pytest.raises(ValueError):
        NoiseSpec(snr)


def test_seed_range():
    NoiseSpec(1, 2**64 - 1)
    with pytest.raises(ValueError):
        NoiseSpec(1, 2**64)
    assert case_seed(2**64 - 1, 1) == 0


def test_pixel_mean_and_variance():
    img = np.full((1, 2), 0.5)
    fg = np.array([[True, False]])
    spec_sigma = 0.5 / 10
    n = 10_000
    vals = np.array([add_gaussian_noise(img, fg, NoiseSpec(10, s, clamp=False))[0, 1] for s in range(n)])
    assert abs(vals.mean() - 0.5) < 4 * spec_sigma / np.sqrt(n)
    assert abs(vals.var() - spec_sigma**2) < 0.1 * spec_sigma**2


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 100), st.floats(0.5, 100))
def test_sigma_monotone_in_snr(a, b):
    img, fg = phantom(32, 32, (16, 16), 6, 0.8, 0.2)
    if a < b:
        assert noise_sigma(img, fg, a) > noise_sigma(img, fg, b)


def test_augment_dataset_single_case_matches(disk):
    img, fg, _ = disk
    spec = NoiseSpec(10, 7)
    (out,) = augment_dataset([(img, fg)], spec)
    assert out.tobytes() == add_gaussian_noise(img, fg, spec).tobytes()


def test_augment_dataset_per_case_seeds(disk):
    img, fg, _ = disk
    a, b = augment_dataset([(img, fg), (img, fg)], NoiseSpec(10, 7))
    assert not np.array_equal(a, b)
    assert b.tobytes() == add_gaussian_noise(img, fg, NoiseSpec(10, 8)).tobytes()


def test_augment_dataset_parallel_matches_serial(rng):
    cases = []
    for i in range(8):
        img, fg = phantom(48, 48, (24, 24), 5 + i, 0.8, 0.1)
        cases.append((img, fg))
    spec = NoiseSpec(5, 1000)
    serial = augment_dataset(cases, spec, jobs=1)
    parallel = augment_dataset(cases, spec, jobs=4)
    assert [s.tobytes() for s in serial] == [p.tobytes() for p in parallel]


def test_augment_dataset_reports_case_index(disk):
    img, fg, _ = disk
    with pytest.raises(CaseError) as info:
        augment_dataset([(img, fg), (img, np.zeros_like(fg))], NoiseSpec(10))
    assert info.value.case == 1


def test_augment_dataset_empty():
    with pytest.raises(ValueError):
        augment_dataset([], NoiseSpec(10))
