"""Frequency-modulated test waveforms with an exactly known frequency trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import get_window, lfilter

from gridfreq.stream import SampleStream, UniformTimebase


class InvalidSpec(ValueError):
    pass


class TrajectoryModulation:
    """A modulation given at a low rate (typically 1 Hz) and read at ``fs``.

    The low-rate values are held (zero-order hold) and smoothed with a
    moving average one input period long, which is the same as linear
    interpolation between knots placed at the centre of each input period.
    Samples are computed on demand so hour-long 25 kHz modulations never
    have to sit in memory.
    """

    def __init__(self, values, fs_mod: float, fs: float):
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("trajectory must be a non-empty 1-D sequence")
        self.fs_mod = float(fs_mod)
        self.fs = float(fs)
        self._length = int(round(self.values.size * self.fs / self.fs_mod))
        self._knots = (np.arange(self.values.size) + 0.5) / self.fs_mod

    def __len__(self) -> int:
        return self._length

    def __getitem__(self, item):
        if isinstance(item, slice):
            start, stop, step = item.indices(self._length)
            n = np.arange(start, stop, step)
        else:
            n = np.asarray(item)
            if np.any((n < 0) | (n >= self._length)):
                raise IndexError("modulation index out of range")
        return np.interp(n / self.fs, self._knots, self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


class ConstantModulation:
    def __init__(self, value: float, length: int):
        self.value = float(value)
        self._length = int(length)

    def __len__(self) -> int:
        return self._length

    def __getitem__(self, item):
        if isinstance(item, slice):
            start, stop, step = item.indices(self._length)
            return np.full(len(range(start, stop, step)), self.value)
        n = np.asarray(item)
        if np.any((n < 0) | (n >= self._length)):
            raise IndexError("modulation index out of range")
        return np.full(n.shape, self.value) if n.ndim else self.value

    def max_abs(self) -> float:
        return abs(self.value)


def _max_abs(modulation) -> float:
    if hasattr(modulation, "max_abs"):
        return modulation.max_abs()
    return float(np.max(np.abs(modulation))) if len(modulation) else 0.0


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    f_nom: float
    fs: int
    duration: int
    modulation: object = None
    D_f: float = 0.0
    A_nom: float = 1.0
    harmonics: Sequence[tuple[int, float]] = ()
    snr_db: float | None = None
    seed: int = 0
    t0_ns: int = 0

    def __post_init__(self):
        if self.modulation is None:
            object.__setattr__(self, "modulation", ConstantModulation(0.0, self.duration))
        elif not hasattr(self.modulation, "max_abs"):
            object.__setattr__(self, "modulation", np.asarray(self.modulation, dtype=np.float64))
        object.__setattr__(self, "harmonics", tuple((int(k), float(a)) for k, a in self.harmonics))
        self.validate()

    def validate(self) -> None:
        if self.A_nom <= 0:
            raise InvalidSpec("amplitude must be positive")
        if self.f_nom <= 0 or self.duration <= 0:
            raise InvalidSpec("f_nom and duration must be positive")
        if int(self.fs) != self.fs:
            raise InvalidSpec("fs must be an integer rate")
        top = max([k for k, _ in self.harmonics], default=1)
        for k, a in self.harmonics:
            if k < 2 or not 0 <= a <= 1:
                raise InvalidSpec(f"bad harmonic (order {k}, amplitude {a})")
        if not self.fs > 2 * self.f_nom * (top + 1):
            raise InvalidSpec(f"fs={self.fs} Hz leaves no Nyquist margin for order {top}")
        if len(self.modulation) != self.duration:
            raise InvalidSpec(f"modulation has {len(self.modulation)} samples, duration is {self.duration}")
        if abs(self.D_f) * _max_abs(self.modulation) >= self.f_nom:
            raise InvalidSpec("modulation drives the frequency to zero or below")
        if self.snr_db is not None and math.isnan(self.snr_db):
            raise InvalidSpec("snr_db is NaN")

    @property
    def signal_power(self) -> float:
        return self.A_nom ** 2 / 2 * (1 + sum(a * a for _, a in self.harmonics))


class FmPhase:
    """Sequential generator of the modulated phase argument.

    The trapezoidal phase integral is carried between calls, and each call
    continues the same sequential sum, so any block partition reproduces a
    single-shot generation bit for bit.
    """

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.position = 0
        self._integral = 0.0
        self._last_m = None

    def next(self, count: int) -> np.ndarray:
        spec = self.spec
        start, stop = self.position, min(self.position + count, spec.duration)
        if stop <= start:
            return np.empty(0)
        m = np.asarray(spec.modulation[start:stop], dtype=np.float64)
        prev = np.empty_like(m)
        prev[1:] = m[:-1]
        if start == 0:
            prev[0] = -m[0]  # theta runs from 1: sample 0 gets no increment
        else:
            prev[0] = self._last_m
        increments = prev + m
        integral = np.cumsum(np.concatenate(([self._integral], increments)))[1:]
        n = np.arange(start, stop, dtype=np.float64)
        phase = (n / spec.fs) * 2 * np.pi * spec.f_nom + 2 * np.pi * spec.D_f * 0.5 * (integral / spec.fs)
        self._integral = integral[-1]
        self._last_m = m[-1]
        self.position = stop
        return phase


def _stream(spec: SyntheticSpec, samples: np.ndarray, start: int, timebase) -> SampleStream:
    t0 = spec.t0_ns + start * 1_000_000_000 // spec.fs
    return SampleStream(samples, spec.fs, t0, timebase, start)


def make_fm_signal(spec: SyntheticSpec) -> SampleStream:
    """Pure FM sine: no harmonics, no noise."""
    phase = FmPhase(spec).next(spec.duration)
    return SampleStream(spec.A_nom * np.sin(phase), spec.fs, spec.t0_ns)


def iter_signal_blocks(spec: SyntheticSpec, block_size: int) -> Iterator[SampleStream]:
    """FM sine with harmonics and noise, generated block by block.

    Noise is drawn sequentially from one generator, so the concatenated
    blocks equal a single-shot generation with the same seed.
    """
    timebase = UniformTimebase(spec.t0_ns, spec.fs)
    gen = FmPhase(spec)
    rng = np.random.default_rng(spec.seed)
    sigma = _noise_sigma(spec.signal_power, spec.snr_db)
    while gen.position < spec.duration:
        start = gen.position
        phase = gen.next(block_size)
        x = spec.A_nom * np.sin(phase)
        for k, a in spec.harmonics:
            x += a * spec.A_nom * np.sin(k * phase)
        if sigma:
            x += sigma * rng.standard_normal(x.size)
        yield _stream(spec, x, start, timebase)


def instantaneous_frequency(spec: SyntheticSpec, n: int) -> float:
    if not 0 <= n < spec.duration:
        raise IndexError(f"sample {n} outside [0, {spec.duration})")
    return spec.f_nom + spec.D_f * float(np.asarray(spec.modulation[n:n + 1])[0])


def true_second_average(spec: SyntheticSpec, k: int) -> float:
    """Mean instantaneous frequency over samples kN+1 .. (k+1)N, N = fs."""
    return float(true_second_averages(spec, [k])[0])


def true_second_averages(spec: SyntheticSpec, ks) -> np.ndarray:
    ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
    N = int(spec.fs)
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        lo, hi = k * N + 1, (k + 1) * N + 1
        if k < 0 or hi > spec.duration:
            raise ValueError(f"second {k} is not fully covered by {spec.duration} samples")
        m = np.asarray(spec.modulation[lo:hi], dtype=np.float64)
        out[i] = np.sum(spec.f_nom + spec.D_f * m) / N
    return out


def add_harmonics(stream: SampleStream, spec: SyntheticSpec) -> SampleStream:
    """Add phase-locked harmonics of the modulated fundamental.

    ``stream`` must come from ``spec``: the phase is regenerated for the
    stream's sample range.
    """
    if not spec.harmonics:
        return stream
    for k, _ in spec.harmonics:
        if k * (spec.f_nom + abs(spec.D_f) * _max_abs(spec.modulation)) >= spec.fs / 2:
            raise InvalidSpec(f"harmonic {k} lies above Nyquist")
    gen = FmPhase(spec)
    if stream.index0:
        gen.next(stream.index0)
    phase = gen.next(len(stream))
    if phase.size != len(stream):
        raise ValueError("stream extends beyond the signal duration")
    x = stream.samples.copy()
    for k, a in spec.harmonics:
        x += a * spec.A_nom * np.sin(k * phase)
    return stream.with_samples(x)


def _noise_sigma(signal_power: float, snr_db: float | None) -> float:
    if snr_db is None or math.isinf(snr_db) and snr_db > 0:
        return 0.0
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    return math.sqrt(signal_power / 10 ** (snr_db / 10))


def add_awgn(stream: SampleStream, snr_db: float | None, seed=None) -> SampleStream:
    """Add white Gaussian noise at ``snr_db`` relative to the stream's mean power."""
    power = float(np.mean(stream.samples ** 2))
    sigma = _noise_sigma(power, snr_db)
    if not sigma:
        return stream
    rng = np.random.default_rng(seed)
    return stream.with_samples(stream.samples + sigma * rng.standard_normal(len(stream)))


def measure_sinad(stream: SampleStream, f_nom: float) -> float:
    """Fundamental power over everything else, from a windowed spectrum (dB)."""
    if len(stream) < stream.fs:
        raise ValueError("need at least one second of samples")
    x = stream.samples - np.mean(stream.samples)
    w = get_window("blackmanharris", x.size, fftbins=False)
    power = np.abs(np.fft.rfft(x * w)) ** 2
    df = stream.fs / x.size
    freqs = np.arange(power.size) * df
    near = np.nonzero(np.abs(freqs - f_nom) <= 0.1 * f_nom)[0]
    peak = near[np.argmax(power[near])]
    half_band = max(5, int(math.ceil(1.0 / df)))
    lo, hi = max(peak - half_band, 0), peak + half_band + 1
    fundamental = power[lo:hi].sum()
    rest = power[5:].sum() - fundamental
    if rest <= 0:
        return float("inf")
    return float(10 * np.log10(fundamental / rest))


def unit_power(m) -> np.ndarray:
    """Scale a zero-mean trajectory to unit mean-square."""
    m = np.asarray(m, dtype=np.float64)
    m = m - m.mean()
    rms = math.sqrt(float(np.mean(m ** 2)))
    if rms == 0:
        raise ValueError("trajectory has no variation")
    return m / rms


def grid_like_trajectory(duration_s: int, rms: float, seed=None, tau_s: float = 60.0,
                         white_share: float = 0.1) -> np.ndarray:
    """A 1 Hz frequency-deviation trajectory resembling grid behaviour.

    A first-order autoregressive (Ornstein-Uhlenbeck) component with
    correlation time ``tau_s`` carries ``1 - white_share`` of the variance;
    the rest is white, giving broadband content up to 0.5 Hz.  Units follow
    ``rms`` (mHz in the CSV files).
    """
    rng = np.random.default_rng(seed)
    a = math.exp(-1.0 / tau_s)
    drive = rng.standard_normal(duration_s) * math.sqrt(1 - a * a)
    ou = lfilter([1.0], [1.0, -a], drive, zi=[a * rng.standard_normal()])[0]
    white = rng.standard_normal(duration_s)
    x = math.sqrt(1 - white_share) * unit_power(ou) + math.sqrt(white_share) * unit_power(white)
    return rms * unit_power(x)
