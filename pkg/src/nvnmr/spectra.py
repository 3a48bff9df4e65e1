"""Frequency-domain analysis of free-precession signals.

Display spectra come from :func:`transform` (mean removal, optional cosine
window, zero padding).  Precise frequencies come from :func:`fit_frequency`,
which fits damped cosines to the raw time-domain record, so it works equally
well on undersampled data once the starting guesses are unaliased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .constants import MHZ
from .spinsys import ISOTOPES, NV15_HYPERFINE_HZ, larmor_frequency

HARMONIC_M = (1, 2, 4)
HARMONIC_MAX_K = 9


class FitError(RuntimeError):
    """Raised when the sinusoid fit does not converge."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    values: np.ndarray
    dwell: float
    n_samples: int = 0
    nfft: int = 0

    def __post_init__(self):
        if len(self.freqs) != len(self.values):
            raise ValueError("freqs and values differ in length")
        if len(self.freqs) > 1 and np.any(np.diff(self.freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")

    @property
    def magnitude(self):
        return np.abs(self.values)

    @property
    def bin_width(self):
        return self.freqs[1] - self.freqs[0] if len(self.freqs) > 1 else math.inf

    def energy(self):
        """Two-sided spectral energy sum |X_k|^2 / nfft, reconstructed from one side."""
        w = np.full(len(self.values), 2.0)
        w[0] = 1.0
        if self.nfft % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * np.abs(self.values) ** 2) / self.nfft)


@dataclass(frozen=True, eq=False)
class Spectrum2D:
    f1: np.ndarray
    f2: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.f1), len(self.f2)):
            raise ValueError("2D spectrum shape does not match axes")

    @property
    def magnitude(self):
        return np.abs(self.values)


@dataclass(frozen=True)
class Peak:
    freq: float
    amplitude: float
    width: float = 0.0
    fit_uncertainty: float = math.nan
    phase: float = 0.0
    decay: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("peak amplitude must be positive")


@dataclass(frozen=True)
class IsotopeMatch:
    isotope: str
    line: str
    expected: float  # Hz
    delta: float  # Hz, measured - expected


@dataclass(frozen=True)
class Harmonic:
    m: int
    k: int

    @property
    def kind(self):
        return "ordinary" if self.m == 1 else "spurious"

    def __str__(self):
        return f"({self.m},{self.k}) {self.kind}"


@dataclass(frozen=True)
class PeakAssignment:
    peak: Peak
    isotopes: tuple = ()
    harmonic: Harmonic | None = None

    def __post_init__(self):
        object.__setattr__(self, "isotopes", tuple(self.isotopes))

    @property
    def isotope(self):
        return self.isotopes[0].isotope if self.isotopes else None

    @property
    def kind(self):
        return self.harmonic.kind if self.harmonic else None


# --------------------------------------------------------------------------
# transforms


def _as_series(signal):
    if hasattr(signal, "grid"):
        return signal.grid.dwell, np.asarray(signal.values, dtype=float)
    t, y = signal
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) != len(y):
        raise ValueError("time and value arrays differ in length")
    if len(t) < 2:
        raise ValueError("need at least two samples")
    d = np.diff(t)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("transform requires a uniform time grid")
    return float(d[0]), y


def _window(n, kind):
    if kind in (None, "none"):
        return np.ones(n)
    if kind == "cosine":
        return np.cos(0.5 * np.pi * np.arange(n) / max(n - 1, 1))
    raise ValueError(f"unknown window {kind!r}")


def _nfft(n, pad):
    if pad < 1:
        raise ValueError("zero_pad_factor must be >= 1")
    return int(pad) * (1 << max(n - 1, 0).bit_length())


def _one_sided(y, dwell, window, pad, remove_dc=True):
    n = len(y)
    if remove_dc:
        y = y - y.mean()
    y = y * _window(n, window)
    nfft = _nfft(n, pad)
    full = np.fft.fft(y, nfft)
    mirror = np.conj(full[(-np.arange(nfft)) % nfft])
    scale = max(np.abs(full).max(), 1e-300)
    if np.abs(full - mirror).max() > 1e-9 * scale:
        raise AssertionError("spectrum of a real signal lost Hermitian symmetry")
    half = full[: nfft // 2 + 1]
    return np.fft.rfftfreq(nfft, dwell), half, nfft


def transform(signal, window="none", zero_pad_factor=1, remove_dc=True):
    """One-sided DFT of a uniformly sampled real signal.

    ``signal`` is a :class:`~nvnmr.protocols.Signal` or a ``(t, y)`` pair.
    """
    dwell, y = _as_series(signal)
    if len(y) == 0:
        raise ValueError("empty signal")
    freqs, vals, nfft = _one_sided(y, dwell, window, zero_pad_factor, remove_dc)
    return Spectrum(freqs, vals, dwell, len(y), nfft)


def transform_2d(signal2d, windows=("none", "none"), pads=(1, 1), remove_dc=(True, False)):
    """Separable 2D transform, first along t1 (rows of ``values``) then t2."""
    data = np.asarray(signal2d.values, dtype=float)
    n1, n2 = data.shape
    d1, d2 = signal2d.grid1.dwell, signal2d.grid2.dwell
    if remove_dc[0]:
        data = data - data.mean(axis=0, keepdims=True)
    data = data * _window(n1, windows[0])[:, None]
    nfft1 = _nfft(n1, pads[0])
    step1 = np.fft.fft(data, nfft1, axis=0)[: nfft1 // 2 + 1]
    if remove_dc[1]:
        step1 = step1 - step1.mean(axis=1, keepdims=True)
    step1 = step1 * _window(n2, windows[1])[None, :]
    nfft2 = _nfft(n2, pads[1])
    if n2 == 1:
        out, f2 = step1, np.zeros(1)
    else:
        out = np.fft.fft(step1, nfft2, axis=1)[:, : nfft2 // 2 + 1]
        f2 = np.fft.rfftfreq(nfft2, d2)
    return Spectrum2D(np.fft.rfftfreq(nfft1, d1), f2, out)


# --------------------------------------------------------------------------
# peaks


def find_peaks(spectrum, threshold=0.1, min_separation=0.0):
    """Local maxima of |X| above ``threshold * max``; parabolic refinement."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    mag = spectrum.magnitude
    if mag.size < 3 or mag.max() <= 0:
        return []
    floor = threshold * mag.max()
    idx = [
        i
        for i in range(1, mag.size - 1)
        if mag[i] >= floor and mag[i] > mag[i - 1] and mag[i] >= mag[i + 1]
    ]
    # endpoints can be maxima too (DC removed, but Nyquist tones land on the edge)
    if mag[-1] >= floor and mag[-1] > mag[-2]:
        idx.append(mag.size - 1)
    df = spectrum.bin_width
    peaks = []
    for i in sorted(idx, key=lambda j: -mag[j]):
        f, a = _parabolic(spectrum.freqs, mag, i)
        if any(abs(f - p.freq) < min_separation for p in peaks):
            continue
        peaks.append(Peak(f, a, _fwhm(spectrum.freqs, mag, i), df / math.sqrt(12)))
    return sorted(peaks, key=lambda p: p.freq)


def _parabolic(freqs, mag, i):
    if i == 0 or i == len(mag) - 1:
        return freqs[i], mag[i]
    y0, y1, y2 = mag[i - 1], mag[i], mag[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return freqs[i], y1
    delta = 0.5 * (y0 - y2) / denom
    df = freqs[1] - freqs[0]
    return freqs[i] + delta * df, y1 - 0.25 * (y0 - y2) * delta


def _fwhm(freqs, mag, i):
    half = mag[i] / 2
    lo = i
    while lo > 0 and mag[lo] > half:
        lo -= 1
    hi = i
    while hi < len(mag) - 1 and mag[hi] > half:
        hi += 1
    return float(freqs[hi] - freqs[lo])


def find_peaks_2d(spectrum2d, threshold=0.2):
    """Local maxima of a 2D magnitude map, strongest first: (f1, f2, amplitude)."""
    mag = spectrum2d.magnitude
    if mag.max() <= 0:
        return []
    padded = np.pad(mag, 1, constant_values=-np.inf)
    core = padded[1:-1, 1:-1]
    is_max = np.ones_like(mag, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            nb = padded[1 + di : padded.shape[0] - 1 + di, 1 + dj : padded.shape[1] - 1 + dj]
            is_max &= core >= nb
    is_max &= mag >= threshold * mag.max()
    ii, jj = np.nonzero(is_max)
    found = [(spectrum2d.f1[i], spectrum2d.f2[j], mag[i, j]) for i, j in zip(ii, jj)]
    return sorted(found, key=lambda p: -p[2])


# --------------------------------------------------------------------------
# time-domain fitting


def _design(t, freqs, decays):
    cols = [np.ones_like(t)]
    for f, g in zip(freqs, decays):
        env = np.exp(-g * t)
        arg = 2 * np.pi * f * t
        cols += [env * np.cos(arg), env * np.sin(arg)]
    return np.column_stack(cols)


def fit_frequency(signal, initial_freqs, decay=True, max_nfev=200):
    """Least-squares fit of ``c + sum_k A_k exp(-g_k t) cos(2 pi f_k t + p_k)``.

    Starting frequencies must be within about one FFT bin of the true tones
    (after unaliasing for undersampled data).  Returns one :class:`Peak` per
    tone with its 1-sigma frequency uncertainty from the fit covariance.
    """
    if hasattr(signal, "grid"):
        t, y = signal.t, np.asarray(signal.values, dtype=float)
    else:
        t, y = (np.asarray(a, dtype=float) for a in signal)
    f0 = np.asarray(initial_freqs, dtype=float)
    if f0.size == 0:
        return []
    n_tones = f0.size
    span = t[-1] - t[0]
    tc = t - t[0]

    # parameters: per tone (frequency offset in units of 1/span, decay * span)
    def unpack(x):
        freqs = f0 + x[:n_tones] / span
        decays = x[n_tones:] / span if decay else np.zeros(n_tones)
        return freqs, decays

    def resid(x):
        freqs, decays = unpack(x)
        a = _design(tc, freqs, decays)
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        return a @ coef - y

    x0 = np.zeros(2 * n_tones if decay else n_tones)
    r0 = resid(x0)
    lower = np.full_like(x0, -np.inf)
    if decay:
        lower[n_tones:] = -1.0  # forbid strongly growing envelopes
    sol = least_squares(resid, x0, method="trf", bounds=(lower, np.inf), max_nfev=max_nfev,
                        xtol=1e-14, ftol=1e-15, gtol=1e-15)
    if sol.status <= 0:
        raise FitError(f"sinusoid fit did not converge: {sol.message}")
    x = sol.x if np.sum(sol.fun**2) <= np.sum(r0**2) else x0
    freqs, decays = unpack(x)
    a = _design(tc, freqs, decays)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)

    # covariance from the full (linear + nonlinear) Jacobian
    jac = _full_jacobian(tc, freqs, decays, coef, decay)
    rss = float(np.sum((a @ coef - y) ** 2))
    dof = max(len(y) - jac.shape[1], 1)
    try:
        cov = np.linalg.pinv(jac.T @ jac) * rss / dof
        sig_f = np.sqrt(np.clip(np.diag(cov)[1 + 2 * n_tones : 1 + 3 * n_tones], 0, None))
    except np.linalg.LinAlgError:
        sig_f = np.full(n_tones, np.nan)

    peaks = []
    for k in range(n_tones):
        c, s = coef[1 + 2 * k], coef[2 + 2 * k]
        amp = math.hypot(c, s)
        # c cos + s sin = amp cos(arg - atan2(s, c)); report the phase at t[0]
        phase = -math.atan2(s, c) - 2 * np.pi * freqs[k] * t[0]
        peaks.append(
            Peak(float(freqs[k]), max(amp, 1e-300), max(float(decays[k] / np.pi), 0.0),
                 float(sig_f[k]), float(np.angle(np.exp(1j * phase))), float(decays[k]))
        )
    return peaks


def _full_jacobian(t, freqs, decays, coef, decay):
    cols = [np.ones_like(t)]
    dfs, dgs = [], []
    for k, (f, g) in enumerate(zip(freqs, decays)):
        c, s = coef[1 + 2 * k], coef[2 + 2 * k]
        env = np.exp(-g * t)
        arg = 2 * np.pi * f * t
        cos, sin = np.cos(arg), np.sin(arg)
        cols += [env * cos, env * sin]
        dfs.append(env * 2 * np.pi * t * (-c * sin + s * cos))
        dgs.append(-t * env * (c * cos + s * sin))
    cols += dfs
    if decay:
        cols += dgs
    return np.column_stack(cols)


# --------------------------------------------------------------------------
# aliasing


def fold(f, dwell):
    """Apparent frequency of a real tone ``f`` sampled every ``dwell``."""
    fs = 1 / dwell
    r = math.fmod(abs(f), fs)
    return min(r, fs - r)


def unalias(f_measured, dwell, band):
    """All true frequencies in ``band`` that fold onto ``f_measured``."""
    lo, hi = band
    if not hi > lo:
        raise ValueError("empty frequency band")
    fs = 1 / dwell
    if not -1e-9 * fs <= f_measured <= fs / 2 * (1 + 1e-9):
        raise ValueError("measured frequency outside [0, Nyquist]")
    tol = 1e-9 * max(fs, abs(hi))
    out = []
    m_max = int(math.ceil((hi + f_measured) / fs)) + 1
    for m in range(0, m_max + 1):
        for f in (m * fs + f_measured, m * fs - f_measured):
            f = abs(f)
            if lo - tol <= f <= hi + tol and not any(abs(f - g) <= tol for g in out):
                out.append(f)
    return sorted(out)


def intersect_candidates(candidate_sets, tol):
    """Frequencies present in every candidate list (within ``tol``)."""
    common = list(candidate_sets[0])
    for other in candidate_sets[1:]:
        common = [f for f in common if any(abs(f - g) <= tol for g in other)]
    return common


def resolve_alias(measurements, band, tol):
    """Intersect unaliasing candidates from several (f_measured, dwell) pairs."""
    return intersect_candidates([unalias(f, d, band) for f, d in measurements], tol)


# --------------------------------------------------------------------------
# assignment


def _reference_lines(b0):
    for name, iso in ISOTOPES.items():
        yield name, "larmor", larmor_frequency(iso, b0) * MHZ
    f15 = larmor_frequency(ISOTOPES["15N"], b0) * MHZ
    yield "15N", "NV hyperfine", abs(f15 - NV15_HYPERFINE_HZ)


def assign_isotope(freq, b0, tol):
    """Isotope lines within ``tol`` Hz of ``freq``, closest first."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not b0 > 0:
        return []
    hits = [
        IsotopeMatch(name, line, f, freq - f)
        for name, line, f in _reference_lines(b0)
        if abs(freq - f) <= tol
    ]
    return sorted(hits, key=lambda h: abs(h.delta))


def classify_harmonic(f_multipulse, f_nmr, tol=0.01):
    """Match ``f_multipulse ~ m f_nmr / k`` for m in (1, 2, 4), odd k <= 9.

    Returns the best :class:`Harmonic` or ``None``.
    """
    if not (f_multipulse > 0 and f_nmr > 0):
        return None
    best = None
    for m in HARMONIC_M:
        for k in range(1, HARMONIC_MAX_K + 1, 2):
            target = m * f_nmr / k
            err = abs(f_multipulse - target) / target
            if err <= tol and (best is None or err < best[0] - 1e-15):
                best = (err, Harmonic(m, k))
    return best[1] if best else None
