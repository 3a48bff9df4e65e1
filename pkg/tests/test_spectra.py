import math

import numpy as np
import pytest

from nvnmr.spectra import (
    FitError,
    Harmonic,
    Spectrum,
    assign_isotope,
    classify_harmonic,
    find_peaks,
    find_peaks_2d,
    fit_frequency,
    fold,
    intersect_candidates,
    resolve_alias,
    transform,
    transform_2d,
    unalias,
)
from nvnmr.protocols import AcquisitionGrid, Signal2D


def tone(f, dwell=1.2e-7, n=512, amp=1.0, phase=0.0):
    t = np.arange(n) * dwell
    return t, amp * np.cos(2 * np.pi * f * t + phase)


def test_transform_peak_bins():
    t, y = tone(2.093e6)
    spec = transform((t, y))
    k = int(np.argmax(spec.magnitude))
    assert abs(spec.freqs[k] - 2.093e6) <= spec.bin_width / 2


def test_transform_validation():
    with pytest.raises(ValueError):
        transform(([0.0, 1.0, 3.0], [1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        transform(([0.0], [1.0]))
    with pytest.raises(ValueError):
        transform(tone(1e6), window="hann")
    with pytest.raises(ValueError):
        transform(tone(1e6), zero_pad_factor=0)


def test_parseval_unpadded_no_window():
    rng = np.random.default_rng(0)
    y = rng.normal(size=256)
    spec = transform((np.arange(256) * 1e-7, y), remove_dc=False)
    assert spec.energy() == pytest.approx(np.sum(y**2), rel=1e-9)


def test_zero_padding_preserves_peak_position():
    t, y = tone(1.37e6, n=200)
    a = find_peaks(transform((t, y), zero_pad_factor=1), threshold=0.5)
    b = find_peaks(transform((t, y), zero_pad_factor=8), threshold=0.5)
    assert abs(a[0].freq - b[0].freq) < 1 / (200 * 1.2e-7)


def test_find_peaks_two_tones_and_threshold():
    df = 1 / (512 * 1.2e-7)
    t, y1 = tone(60 * df)
    _, y2 = tone(150 * df, amp=0.1)
    spec = transform((t, y1 + y2))
    assert len(find_peaks(spec, threshold=0.05)) == 2
    assert len(find_peaks(spec, threshold=0.5)) == 1
    with pytest.raises(ValueError):
        find_peaks(spec, threshold=1.5)
    flat = Spectrum(np.arange(5.0), np.zeros(5, complex), 1.0, 5, 8)
    assert find_peaks(flat) == []


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 1.0]), np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 0.0]), np.zeros(2), 1.0)


def test_fit_recovers_undersampled_tones():
    rng = np.random.default_rng(3)
    dwell, n = 1e-6, 200
    t = np.arange(n) * dwell
    f1, f2 = 2093210.0, 6116700.0
    y = 0.2 * np.cos(2 * np.pi * f1 * t) + 0.15 * np.cos(2 * np.pi * f2 * t + 0.4)
    y += rng.normal(scale=0.01, size=n)
    peaks = fit_frequency((t, y), [f1 + 2000, f2 - 2000])
    assert peaks[0].freq == pytest.approx(f1, rel=1e-5)
    assert peaks[1].freq == pytest.approx(f2, rel=1e-5)
    for p, f in zip(peaks, (f1, f2)):
        assert 0 < p.fit_uncertainty < 200
        assert abs(p.freq - f) < 5 * p.fit_uncertainty
        assert p.width >= 0


def test_fit_decay_estimate():
    t = np.arange(400) * 5e-8
    y = np.exp(-t / 5e-6) * np.cos(2 * np.pi * 3e6 * t)
    (p,) = fit_frequency((t, y), [3.01e6])
    assert p.decay == pytest.approx(1 / 5e-6, rel=1e-4)
    assert p.width == pytest.approx(1 / (5e-6 * math.pi), rel=1e-4)


def test_fit_empty_guess_returns_nothing():
    assert fit_frequency(tone(1e6), []) == []


def test_fit_error_type_is_runtime_error():
    assert issubclass(FitError, RuntimeError)


def test_fold_and_unalias():
    assert fold(2.3e6, 1e-6) == pytest.approx(0.3e6)
    assert fold(2.7e6, 1e-6) == pytest.approx(0.3e6)
    assert unalias(0.5e6, 1e-6, (0, 2.5e6)) == pytest.approx([0.5e6, 1.5e6, 2.5e6])
    with pytest.raises(ValueError):
        unalias(0.7e6, 1e-6, (0, 1e7))
    with pytest.raises(ValueError):
        unalias(0.1e6, 1e-6, (1e6, 1e6))


def test_unalias_contains_truth_for_every_fold():
    for f in np.linspace(0.1e6, 8e6, 37):
        cands = unalias(fold(f, 7.3e-7), 7.3e-7, (0, 9e6))
        assert any(abs(c - f) < 1e-3 for c in cands)


def test_resolve_alias_with_two_dwells():
    f = 6.1219e6
    meas = [(fold(f, d), d) for d in (1e-6, 1.2e-7)]
    assert resolve_alias(meas, (0, 8e6), 1e3) == pytest.approx([f])
    assert intersect_candidates([[1.0, 2.0], [2.0005, 3.0]], 1e-3) == [2.0]


def test_assign_isotope():
    hits = assign_isotope(2.09321e6, 0.1954736, 5e3)
    assert hits[0].isotope == "13C"
    assert hits[0].line == "larmor"
    assert assign_isotope(3.3e6, 0.1954736, 5e3) == []
    n15 = assign_isotope(abs(4.31727 * 0.174 * 1e6 - 3.05e6), 0.174, 1e3)
    assert n15[0].isotope == "15N" and n15[0].line == "NV hyperfine"
    with pytest.raises(ValueError):
        assign_isotope(1e6, 0.1, 0)


def test_classify_harmonic():
    assert classify_harmonic(8.21e6, 4.105e6) == Harmonic(2, 1)
    assert str(classify_harmonic(8.21e6, 4.105e6)) == "(2,1) spurious"
    assert classify_harmonic(4.105e6 / 3, 4.105e6) == Harmonic(1, 3)
    assert classify_harmonic(4 * 4.105e6 / 3, 4.105e6).kind == "spurious"
    assert classify_harmonic(3.0e6, 4.105e6) is None
    assert classify_harmonic(0.0, 1.0) is None


def test_transform_2d_single_peak():
    g1, g2 = AcquisitionGrid(0, 1.2e-7, 64), AcquisitionGrid(0, 2e-6, 32)
    t1, t2 = np.meshgrid(g1.times, g2.times, indexing="ij")
    vals = np.cos(2 * np.pi * 1.5e6 * t1) * np.cos(2 * np.pi * 90e3 * t2)
    spec = transform_2d(Signal2D(g1, g2, vals))
    f1, f2, _ = find_peaks_2d(spec)[0]
    assert abs(f1 - 1.5e6) <= 1 / (64 * 1.2e-7)
    assert abs(f2 - 90e3) <= 1 / (32 * 2e-6)
