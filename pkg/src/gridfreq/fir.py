"""Linear-phase FIR low-pass filters for zero-crossing pre-conditioning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from gridfreq.stream import SampleStream


@dataclass(frozen=True, eq=False)
class FirFilter:
    coefficients: np.ndarray
    fs: float
    f_corner: float

    def __post_init__(self):
        h = np.asarray(self.coefficients, dtype=np.float64)
        if h.ndim != 1 or h.size % 2 == 0:
            raise ValueError("a type-I FIR needs an odd number of taps")
        object.__setattr__(self, "coefficients", h)

    @property
    def order(self) -> int:
        return self.coefficients.size - 1

    @property
    def group_delay(self) -> int:
        """Constant delay in samples (L/2)."""
        return self.order // 2

    def is_symmetric(self) -> bool:
        h = self.coefficients
        return bool(np.array_equal(h, h[::-1]))


def _symmetrize(h: np.ndarray) -> np.ndarray:
    # Averaging with the reversed copy makes the taps bit-exactly symmetric.
    return 0.5 * (h + h[::-1])


def prefilter_order(fs: float, f_nom: float) -> int:
    """Filter order L: fs / (5 * 2 f_nom) * 2, rounded to the nearest even integer."""
    raw = fs / (5.0 * (2.0 * f_nom)) * 2.0
    return max(2, 2 * int(round(raw / 2.0)))


def design_zc_prefilter(fs: float, f_nom: float) -> FirFilter:
    """Hamming-windowed sinc low-pass that feeds the zero-crossing detector.

    The kernel uses the cutoff term ``2 f_nom / fs``; the taps are normalized
    to unit DC gain.  Uniform gain does not move zero crossings, so the
    normalization has no effect on the frequency estimate.
    """
    if f_nom <= 0 or fs < 100 * f_nom:
        raise ValueError(f"fs={fs} Hz is too low for f_nom={f_nom} Hz (need fs >= 100 f_nom)")
    L = prefilter_order(fs, f_nom)
    x = np.arange(L + 1) - L / 2
    w = 2.0 * math.pi * 2.0 * f_nom / fs
    kernel = np.empty(L + 1)
    centre = x == 0
    kernel[centre] = w
    kernel[~centre] = np.sin(w * x[~centre]) / x[~centre]
    h = _symmetrize(kernel * np.hamming(L + 1))
    h = h / h.sum()
    return FirFilter(_symmetrize(h), fs, f_nom)


def design_modulation_lowpass(cutoff: float, fs_mod: float,
                              transition_width: float | None = None) -> FirFilter:
    """Windowed-sinc low-pass for shaping modulation trajectories.

    Every filter of the family shares one absolute transition width, so the
    roll-off (dB per Hz) is the same for every cutoff.  ``cutoff == fs_mod/2``
    means no filtering and returns a unit impulse.
    """
    nyq = fs_mod / 2.0
    if not 0 < cutoff <= nyq:
        raise ValueError(f"cutoff {cutoff} Hz outside (0, {nyq}] Hz")
    if cutoff == nyq:
        return FirFilter(np.ones(1), fs_mod, cutoff)
    if transition_width is None:
        transition_width = 0.01 * fs_mod
    if transition_width <= 0:
        raise ValueError("transition width must be positive")
    # Hamming main-lobe width is about 3.3 fs / N.
    n_taps = int(math.ceil(3.3 * fs_mod / transition_width))
    n_taps += 1 - n_taps % 2
    x = np.arange(n_taps) - (n_taps - 1) / 2
    h = 2.0 * cutoff / fs_mod * np.sinc(2.0 * cutoff / fs_mod * x) * np.hamming(n_taps)
    h = _symmetrize(h)
    return FirFilter(_symmetrize(h / h.sum()), fs_mod, cutoff)


def frequency_response(filt: FirFilter, f) -> np.ndarray | complex:
    """Exact DTFT of the taps at frequency ``f`` (Hz), no delay compensation."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0) or np.any(f_arr > filt.fs / 2):
        raise ValueError("frequency outside [0, fs/2]")
    n = np.arange(filt.coefficients.size)
    omega = 2.0 * np.pi * np.atleast_1d(f_arr) / filt.fs
    H = np.exp(-1j * np.outer(omega, n)) @ filt.coefficients
    if f_arr.ndim == 0:
        return complex(H[0])
    return H.reshape(f_arr.shape)


def corner_frequency(filt: FirFilter, level_db: float = -3.0, f_max: float | None = None,
                     step: float | None = None) -> float:
    """First frequency at which the magnitude response falls below ``level_db``.

    A coarse grid brackets the first crossing, which is then refined by root
    finding on the exact response.
    """
    f_max = filt.fs / 2 if f_max is None else f_max
    if step is None:
        step = f_max / 8192
    grid = np.arange(0.0, f_max + step / 2, step)
    grid = grid[grid <= filt.fs / 2]

    def excess(f):
        return 20 * np.log10(np.maximum(np.abs(frequency_response(filt, f)), 1e-300)) - level_db

    below = np.nonzero(excess(grid) < 0)[0]
    if below.size == 0:
        return float("inf")
    i = below[0]
    if i == 0:
        return 0.0
    return float(brentq(lambda f: float(excess(f)), grid[i - 1], grid[i], xtol=1e-9))


def apply_zero_phase(filt: FirFilter, stream: SampleStream) -> SampleStream:
    """Filter and undo the L/2 group delay.

    The first and last L/2 output samples see the zero padding beyond the
    record and are returned as NaN; the zero-crossing detector skips them.
    """
    L = filt.order
    if len(stream) <= L:
        raise ValueError(f"stream of {len(stream)} samples is shorter than the filter ({L + 1} taps)")
    half = L // 2
    out = np.full(len(stream), np.nan)
    out[half:len(stream) - half] = np.convolve(stream.samples, filt.coefficients, "valid")
    return stream.with_samples(out)


def filter_sequence(filt: FirFilter, x, edge: str = "reflect") -> np.ndarray:
    """Zero-phase filtering of a short sequence with padded edges.

    Used on 1 Hz modulation trajectories, where the record is often not much
    longer than the filter and dropping the edges is not an option.
    """
    x = np.asarray(x, dtype=np.float64)
    h = filt.coefficients
    if h.size == 1:
        return x * h[0]
    half = h.size // 2
    pad = min(half, x.size - 1) if edge == "reflect" else half
    if edge == "reflect" and pad > 0:
        padded = np.pad(x, pad, mode="reflect")
        if pad < half:
            padded = np.pad(padded, half - pad, mode="edge")
    else:
        padded = np.pad(x, half, mode="edge")
    return fftconvolve(padded, h, mode="valid")
