"""Sample streams and the timebases that map sample indices to UTC.

Times are carried as an integer UTC second plus a float fraction in [0, 1).
Keeping the whole seconds out of the float keeps sub-microsecond resolution
over multi-day recordings.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

NS_PER_S = 1_000_000_000


def split_ns(t_ns: int) -> tuple[int, int]:
    """Split integer nanoseconds into (second, nanosecond-of-second)."""
    return divmod(int(t_ns), NS_PER_S)


def _normalize(sec: np.ndarray, frac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    whole = np.floor(frac)
    if np.any(whole != 0):
        sec = sec + whole.astype(np.int64)
        frac = frac - whole
    return sec, frac


@dataclass(frozen=True)
class UniformTimebase:
    """Sample ``n`` sits at ``t0_ns + n / fs``; fs must be an integer rate."""

    t0_ns: int
    fs: int

    def __post_init__(self):
        if int(self.fs) != self.fs or self.fs <= 0:
            raise ValueError(f"uniform timebase needs a positive integer fs, got {self.fs}")
        object.__setattr__(self, "fs", int(self.fs))
        object.__setattr__(self, "t0_ns", int(self.t0_ns))

    def times(self, index, frac=0.0) -> tuple[np.ndarray, np.ndarray]:
        """UTC (second, fraction) of fractional sample positions ``index + frac``."""
        index = np.asarray(index, dtype=np.int64)
        frac = np.broadcast_to(np.asarray(frac, dtype=np.float64), index.shape)
        fs = self.fs
        t0_sec, t0_sub = split_ns(self.t0_ns)
        whole, rest = np.divmod(index, fs)
        num = t0_sub * fs + rest * NS_PER_S
        carry, rem = np.divmod(num, fs * NS_PER_S)
        sec = t0_sec + whole + carry
        f = (rem + frac * NS_PER_S) / (fs * NS_PER_S)
        return _normalize(sec.astype(np.int64), f)

    def index_of_ns(self, t_ns: int) -> float:
        return (int(t_ns) - self.t0_ns) * self.fs / NS_PER_S

    def is_synced(self, seconds) -> np.ndarray:
        return np.ones(np.shape(seconds), dtype=bool)


@dataclass(frozen=True, eq=False)
class PpsTimebase:
    """Piecewise-linear index-to-UTC map anchored on detected PPS edges.

    ``edge_index[j]`` is the fractional device sample index at which the edge
    for UTC second ``edge_sec[j]`` was detected.  Outside the edge range the
    nearest interval is extrapolated.  A UTC second counts as synchronized only
    when both its opening and closing edges were seen.
    """

    edge_index: np.ndarray
    edge_sec: np.ndarray
    fs: float

    def __post_init__(self):
        e = np.asarray(self.edge_index, dtype=np.float64)
        s = np.asarray(self.edge_sec, dtype=np.int64)
        if e.shape != s.shape or e.size < 2:
            raise ValueError("need at least two PPS edges to build a timebase")
        if np.any(np.diff(e) <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("PPS edges must be strictly increasing")
        object.__setattr__(self, "edge_index", e)
        object.__setattr__(self, "edge_sec", s)

    def times(self, index, frac=0.0) -> tuple[np.ndarray, np.ndarray]:
        index = np.asarray(index, dtype=np.int64)
        frac = np.broadcast_to(np.asarray(frac, dtype=np.float64), index.shape)
        e, s = self.edge_index, self.edge_sec
        x = index.astype(np.float64)
        j = np.searchsorted(e, x + frac, side="right") - 1
        j = np.clip(j, 0, e.size - 2)
        base = np.floor(e[j])
        pos = (x - base) + frac - (e[j] - base)
        f = pos / (e[j + 1] - e[j]) * (s[j + 1] - s[j])
        return _normalize(s[j].copy(), f)

    def index_of_ns(self, t_ns: int) -> float:
        sec, sub = split_ns(t_ns)
        t = sec + sub / NS_PER_S
        tt = self.edge_sec.astype(np.float64)
        j = int(np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 2))
        slope = (self.edge_index[j + 1] - self.edge_index[j]) / (tt[j + 1] - tt[j])
        return float(self.edge_index[j] + (t - tt[j]) * slope)

    def is_synced(self, seconds) -> np.ndarray:
        seconds = np.asarray(seconds, dtype=np.int64)
        s = self.edge_sec
        pos = np.searchsorted(s, seconds)
        have_open = (pos < s.size) & (s[np.minimum(pos, s.size - 1)] == seconds)
        nxt = np.minimum(pos + 1, s.size - 1)
        have_close = have_open & (pos + 1 < s.size) & (s[nxt] == seconds + 1)
        return have_close


@dataclass(frozen=True, eq=False)
class SampleStream:
    """A uniformly sampled waveform with a UTC timebase.

    ``index0`` is the absolute device sample index of ``samples[0]`` within
    ``timebase``; slices of one recording share the timebase and differ only
    in ``index0``.
    """

    samples: np.ndarray
    fs: float
    t0_ns: int = 0
    timebase: UniformTimebase | PpsTimebase | None = field(default=None)
    index0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.timebase is None:
            object.__setattr__(self, "timebase", UniformTimebase(self.t0_ns, self.fs))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def times(self, n, frac=0.0) -> tuple[np.ndarray, np.ndarray]:
        """UTC (second, fraction) of local sample positions ``n + frac``."""
        return self.timebase.times(np.asarray(n, dtype=np.int64) + self.index0, frac)

    def time_seconds(self, n=None) -> np.ndarray:
        """Float UTC seconds of local samples; convenient, not precise for long runs."""
        if n is None:
            n = np.arange(len(self))
        sec, frac = self.times(n)
        return sec + frac

    def with_samples(self, samples) -> "SampleStream":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != self.samples.shape:
            raise ValueError("replacement samples must keep the stream length")
        return replace(self, samples=samples)

    def slice(self, start: int, stop: int | None = None) -> "SampleStream":
        start, stop, _ = slice(start, stop).indices(len(self))
        sec, frac = self.times(start)
        t0 = int(sec) * NS_PER_S + int(round(float(frac) * NS_PER_S))
        return SampleStream(self.samples[start:stop], self.fs, t0, self.timebase,
                            self.index0 + start)

    def blocks(self, size: int) -> Iterator["SampleStream"]:
        if size <= 0:
            raise ValueError("block size must be positive")
        for start in range(0, len(self), size):
            yield self.slice(start, start + size)


def concatenate(streams) -> SampleStream:
    """Join consecutive slices of one recording back into a single stream."""
    streams = list(streams)
    if not streams:
        raise ValueError("nothing to concatenate")
    first = streams[0]
    expected = first.index0
    for s in streams:
        if s.timebase is not first.timebase and s.timebase != first.timebase:
            raise ValueError("streams do not share a timebase")
        if s.index0 != expected:
            raise ValueError("streams are not contiguous")
        expected += len(s)
    return SampleStream(np.concatenate([s.samples for s in streams]), first.fs,
                        first.t0_ns, first.timebase, first.index0)
