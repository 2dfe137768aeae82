"""Simulated GPS/PPS synchronization and device clock imperfections.

A device samples with a quartz running ``ppm_error`` fast.  Its PPS channel
is sampled on the same clock, so detected PPS edges tell which device
sample index belongs to each UTC second; the alignment step maps indices
to UTC piecewise-linearly between consecutive edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gridfreq.stream import NS_PER_S, PpsTimebase, SampleStream, split_ns

PULSE_RISE_SAMPLES = 5
PULSE_WIDTH_S = 0.1
EDGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class ClockModel:
    ppm_error: float = 0.0
    static_offset: float = 0.0
    pps_jitter: float = 0.0

    def __post_init__(self):
        if abs(self.ppm_error) > 200:
            raise ValueError(f"|ppm_error| must be <= 200, got {self.ppm_error}")
        if abs(self.static_offset) > 2e-5:
            raise ValueError(f"|static_offset| must be <= 20 us, got {self.static_offset}")
        if not 0 <= self.pps_jitter <= 1e-6:
            raise ValueError(f"pps_jitter must lie in [0, 1 us], got {self.pps_jitter}")

    @property
    def rate(self) -> float:
        """Device samples per nominal sample."""
        return 1.0 + self.ppm_error * 1e-6


@dataclass(frozen=True, eq=False)
class PpsChannel:
    samples: np.ndarray
    fs: float
    first_second: int
    true_edge_times: np.ndarray
    gaps: tuple = field(default=())


def _raised_cosine_step(x: np.ndarray) -> np.ndarray:
    return np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, 0.5 - 0.5 * np.cos(np.pi * np.clip(x, 0, 1))))


def simulate_pps(model: ClockModel, duration_s: float, fs: float, seed=None,
                 start_second: int = 0, gaps=()) -> PpsChannel:
    """Low-pass shaped PPS pulses as sampled by a device with ``model``'s clock.

    Device sample ``n`` is taken at true time ``start_second + n / (fs * rate)``.
    The pulse for UTC second ``s`` rises (raised cosine, 5 samples, centred)
    at ``s + static_offset + jitter_s`` and stays high for 100 ms.  Seconds
    listed in ``gaps`` carry no pulse (lost reception).
    """
    if fs < 1000:
        raise ValueError("PPS simulation needs fs >= 1 kHz")
    rng = np.random.default_rng(seed)
    n_seconds = int(math.ceil(duration_s)) + 2
    labels = start_second + np.arange(-1, n_seconds)
    jitter = rng.uniform(-model.pps_jitter, model.pps_jitter, labels.size) if model.pps_jitter else np.zeros(labels.size)
    edges = labels + model.static_offset + jitter - start_second  # relative true time
    count = int(math.floor(duration_s * fs * model.rate))
    t = np.arange(count) / (fs * model.rate)
    nearest = np.clip(np.floor(t + 0.5).astype(np.int64) + 1, 0, labels.size - 1)
    d = t - edges[nearest]
    rise = PULSE_RISE_SAMPLES / fs
    x = _raised_cosine_step((d + rise / 2) / rise) - _raised_cosine_step((d - PULSE_WIDTH_S + rise / 2) / rise)
    gap_set = set(int(g) for g in gaps)
    if gap_set:
        silent = np.isin(labels[nearest], list(gap_set))
        x[silent] = 0.0
    present = np.array([lab not in gap_set for lab in labels])
    true_edges = labels[present] + model.static_offset + jitter[present]
    return PpsChannel(x, fs, start_second, true_edges, tuple(sorted(gap_set)))


def detect_pps_edges(pps: PpsChannel) -> tuple[np.ndarray, np.ndarray]:
    """Rising threshold crossings of the PPS channel and their UTC labels.

    Labels count whole seconds between successive edges, the way a receiver
    labels pulses from its serial time messages.
    """
    p = pps.samples
    lo, hi = p[:-1], p[1:]
    n = np.nonzero((lo < EDGE_THRESHOLD) & (hi >= EDGE_THRESHOLD))[0]
    idx = n + (EDGE_THRESHOLD - lo[n]) / (hi[n] - lo[n])
    if idx.size == 0:
        return idx, np.empty(0, np.int64)
    labels = np.empty(idx.size, np.int64)
    labels[0] = pps.first_second + int(round(idx[0] / pps.fs))
    steps = np.rint(np.diff(idx) / pps.fs).astype(np.int64)
    labels[1:] = labels[0] + np.cumsum(steps)
    return idx, labels


def align_to_pps(signal: SampleStream, pps: PpsChannel) -> SampleStream:
    """Timestamp the signal channel from the synchronously sampled PPS channel."""
    if len(signal) != pps.samples.size:
        raise ValueError("signal and PPS channels must have the same length")
    idx, labels = detect_pps_edges(pps)
    if idx.size < 2:
        raise ValueError("fewer than two PPS edges: cannot align")
    tb = PpsTimebase(idx + signal.index0, labels, signal.fs)
    sec, frac = tb.times(signal.index0)
    t0 = int(sec) * NS_PER_S + int(round(float(frac) * NS_PER_S))
    return SampleStream(signal.samples, signal.fs, t0, tb, signal.index0)


def clock_error_to_frequency_error(dt: float, f_nom: float) -> float:
    """Frequency error caused by a timing error ``dt`` over one period: f_nom**2 * dt."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return f_nom * f_nom * dt


def cubic_resample(x: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Four-point cubic Lagrange interpolation of ``x`` at fractional positions."""
    i = np.clip(np.floor(positions).astype(np.int64), 1, x.size - 3)
    t = positions - i
    xm1, x0, x1, x2 = x[i - 1], x[i], x[i + 1], x[i + 2]
    return (
        -t * (t - 1) * (t - 2) / 6 * xm1
        + (t + 1) * (t - 1) * (t - 2) / 2 * x0
        - (t + 1) * t * (t - 2) / 2 * x1
        + (t + 1) * t * (t - 1) / 6 * x2
    )


def apply_clock_model(model: ClockModel, true_signal: SampleStream, seed=None,
                      polarity: int = 1, gaps=(), chunk: int = 1 << 20) -> tuple[SampleStream, PpsChannel]:
    """Observe ``true_signal`` with a simulated device.

    The device starts at the true stream's first sample (taken to be a whole
    UTC second) and samples at ``fs * rate``; its samples are labelled with
    the nominal rate, as a real device would before PPS alignment.
    """
    if polarity not in (1, -1):
        raise ValueError("polarity must be +1 or -1")
    t0_sec, t0_sub = split_ns(true_signal.t0_ns)
    if t0_sub:
        raise ValueError("true signal must start on a whole UTC second")
    fs = true_signal.fs
    usable = len(true_signal) - 3
    count = int(math.floor(usable * model.rate))
    out = np.empty(count)
    x = true_signal.samples
    for a in range(0, count, chunk):
        b = min(a + chunk, count)
        pos = np.arange(a, b, dtype=np.float64) / model.rate
        exact = pos == np.floor(pos)
        if exact.all():
            out[a:b] = x[pos.astype(np.int64)]
        else:
            out[a:b] = cubic_resample(x, pos)
    if polarity < 0:
        out = -out
    pps = simulate_pps(model, count / (fs * model.rate), fs, seed, t0_sec, gaps)
    pps = PpsChannel(pps.samples[:count], fs, pps.first_second, pps.true_edge_times, pps.gaps)
    if pps.samples.size < count:
        count = pps.samples.size
        out = out[:count]
    return SampleStream(out, fs, true_signal.t0_ns), pps
