"""Zero-crossing frequency estimation aggregated to UTC seconds.

Interval rule: second ``k`` is opened by the last rising crossing at or
before boundary ``k`` and closed by the last rising crossing at or before
boundary ``k + 1``; that closing crossing opens second ``k + 1``.  The
one-second value is the number of periods over the elapsed time between the
two crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gridfreq.fir import FirFilter, design_zc_prefilter
from gridfreq.stream import NS_PER_S, PpsTimebase, SampleStream, UniformTimebase

QI_OK = 0
QI_INVALID = 1
QI_INTERPOLATED = 2

SANITY_BAND = 0.2


@dataclass(frozen=True, eq=False)
class ZeroCrossings:
    """Rising zero crossings as UTC (second, fraction) pairs, time ordered."""

    sec: np.ndarray
    frac: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sec", np.asarray(self.sec, dtype=np.int64))
        object.__setattr__(self, "frac", np.asarray(self.frac, dtype=np.float64))

    def __len__(self) -> int:
        return self.sec.size

    def __getitem__(self, i) -> tuple[int, float]:
        return int(self.sec[i]), float(self.frac[i])

    def seconds(self) -> np.ndarray:
        """Float UTC seconds; loses precision on long absolute times."""
        return self.sec + self.frac

    def is_sorted(self) -> bool:
        if len(self) < 2:
            return True
        ds = np.diff(self.sec)
        df = np.diff(self.frac)
        return bool(np.all((ds > 0) | ((ds == 0) & (df > 0))))


@dataclass(frozen=True, eq=False)
class Periods:
    t_start: ZeroCrossings
    t_end: ZeroCrossings
    f: np.ndarray


@dataclass(frozen=True)
class SecondAggregate:
    k: int
    f_k: float
    n_periods: int
    qi: int
    t_open: tuple[int, float] | None = None
    t_close: tuple[int, float] | None = None


def _detect(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairs u[n] < 0 <= u[n+1]; returns (n, interpolated fraction in (0, 1])."""
    lo = values[:-1]
    hi = values[1:]
    n = np.nonzero((lo < 0) & (hi >= 0))[0]
    frac = -lo[n] / (hi[n] - lo[n])
    return n, frac


def _canonical(n: np.ndarray, frac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # a crossing exactly on sample n+1 is reported as that sample
    on_next = frac >= 1.0
    n = n + on_next
    frac = np.where(on_next, 0.0, frac)
    return n, frac


def find_rising_zero_crossings(stream: SampleStream) -> ZeroCrossings:
    """Rising crossings of an (already filtered) stream by linear interpolation.

    NaN samples never take part in a crossing.
    """
    if len(stream) < 2:
        return ZeroCrossings(np.empty(0, np.int64), np.empty(0))
    n, frac = _canonical(*_detect(stream.samples))
    sec, f = stream.times(n, frac)
    return ZeroCrossings(sec, f)


def _elapsed(a_sec, a_frac, b_sec, b_frac):
    return (b_sec - a_sec) + (b_frac - a_frac)


def period_frequencies(zcs: ZeroCrossings) -> Periods:
    if len(zcs) < 2:
        raise ValueError("need at least two crossings to form a period")
    if not zcs.is_sorted():
        raise ValueError("crossings are not strictly increasing")
    start = ZeroCrossings(zcs.sec[:-1], zcs.frac[:-1])
    end = ZeroCrossings(zcs.sec[1:], zcs.frac[1:])
    return Periods(start, end, 1.0 / _elapsed(start.sec, start.frac, end.sec, end.frac))


def _count_at_or_before(sec: np.ndarray, frac: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Number of crossings with time <= k for each integer boundary k."""
    counts = np.searchsorted(sec, ks, side="left")
    inside = counts < sec.size
    at = np.zeros(ks.shape, dtype=bool)
    at[inside] = (sec[counts[inside]] == ks[inside]) & (frac[counts[inside]] == 0.0)
    return counts + at


class _Chain:
    """Crossings of one gap-free data segment, with per-period flags."""

    def __init__(self):
        self.sec = np.empty(0, np.int64)
        self.frac = np.empty(0)
        self.bad = np.empty(0, np.int64)  # 1 if the period ending here is out of band

    def extend(self, sec, frac, f_nom):
        if sec.size == 0:
            return
        all_sec = np.concatenate((self.sec[-1:], sec))
        all_frac = np.concatenate((self.frac[-1:], frac))
        bad = np.zeros(sec.size, np.int64)
        if all_sec.size > 1:
            f = 1.0 / _elapsed(all_sec[:-1], all_frac[:-1], all_sec[1:], all_frac[1:])
            flags = (np.abs(f - f_nom) > SANITY_BAND * f_nom).astype(np.int64)
            if self.sec.size:
                bad = flags
            else:
                bad[1:] = flags
        self.sec = np.concatenate((self.sec, sec))
        self.frac = np.concatenate((self.frac, frac))
        self.bad = np.concatenate((self.bad, bad))

    def trim_before(self, index: int):
        if index > 0:
            self.sec = self.sec[index:]
            self.frac = self.frac[index:]
            self.bad = self.bad[index:]


def _aggregate(chain_sec, chain_frac, chain_bad, ks, mode, timebase) -> list[SecondAggregate]:
    """Aggregates for boundaries ``ks`` from one contiguous crossing chain.

    The caller guarantees that the chain's data cover every ``k + 1``.
    """
    ks = np.asarray(ks, dtype=np.int64)
    if ks.size == 0:
        return []
    opener = _count_at_or_before(chain_sec, chain_frac, ks) - 1
    closer = _count_at_or_before(chain_sec, chain_frac, ks + 1) - 1
    bad_cum = np.concatenate(([0], np.cumsum(chain_bad)))
    out = []
    synced_all = isinstance(timebase, UniformTimebase)
    for i, k in enumerate(ks.tolist()):
        o, c = int(opener[i]), int(closer[i])
        if o < 0 or c <= o:
            out.append(SecondAggregate(k, math.nan, 0, QI_INVALID))
            continue
        t_open = (int(chain_sec[o]), float(chain_frac[o]))
        t_close = (int(chain_sec[c]), float(chain_frac[c]))
        n = c - o
        if mode == "cycles":
            f_k = n / _elapsed(chain_sec[o], chain_frac[o], chain_sec[c], chain_frac[c])
        else:
            f_p = 1.0 / _elapsed(chain_sec[o:c], chain_frac[o:c],
                                 chain_sec[o + 1:c + 1], chain_frac[o + 1:c + 1])
            f_k = np.add.reduce(f_p) / n
        qi = QI_OK
        if bad_cum[c + 1] - bad_cum[o + 1] > 0:
            qi = QI_INVALID
        elif not synced_all:
            span = np.arange(t_open[0], k + 1)
            if not np.all(timebase.is_synced(span)):
                qi = QI_INVALID
        out.append(SecondAggregate(k, float(f_k), n, qi, t_open, t_close))
    return out


def aggregate_seconds(zcs: ZeroCrossings, utc_seconds, f_nom: float | None = None,
                      mode: str = "cycles") -> list[SecondAggregate]:
    """One-second aggregates from a gap-free crossing sequence.

    ``utc_seconds`` lists the boundaries ``k`` to evaluate.  Crossings are
    assumed to cover every boundary ``k + 1``; seconds lacking an opening
    crossing come back invalid.  With ``f_nom`` set, periods outside
    f_nom +/- 20 % invalidate their second.
    """
    if mode not in ("cycles", "mean"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if not zcs.is_sorted():
        raise ValueError("crossings are not strictly increasing")
    chain = _Chain()
    chain.extend(zcs.sec, zcs.frac, f_nom if f_nom is not None else math.nan)
    if f_nom is None:
        chain.bad[:] = 0
    return _aggregate(chain.sec, chain.frac, chain.bad, np.asarray(utc_seconds), mode,
                      UniformTimebase(0, 1))


def mark_missing_seconds(aggregates, coverage) -> list[SecondAggregate]:
    """Invalidate seconds whose intervals are not inside acquired data.

    ``coverage`` is a list of (start, end) UTC float seconds of acquired
    samples.  A second needs gap-free data from its opening crossing (or the
    boundary, whichever is earlier) through boundary ``k + 1``, otherwise a
    period measurement could be missing.
    """
    spans = sorted((float(a), float(b)) for a, b in coverage)
    out = []
    for agg in aggregates:
        if agg.qi != QI_OK:
            out.append(agg)
            continue
        lo = min(agg.k, agg.t_open[0] + agg.t_open[1]) if agg.t_open else agg.k
        hi = agg.k + 1
        if any(a <= lo and hi <= b for a, b in spans):
            out.append(agg)
        else:
            out.append(SecondAggregate(agg.k, agg.f_k, agg.n_periods, QI_INVALID,
                                       agg.t_open, agg.t_close))
    return out


class FrequencyEstimator:
    """Block-wise estimator: pre-filter, detect crossings, aggregate seconds.

    Feeding a recording in any block partition gives the same aggregates as
    feeding it whole.  Blocks must arrive in time order; a block starting
    later than the previous one ended, or NaN samples inside a block, are
    treated as missing data.  One estimator serves one stream.
    """

    def __init__(self, f_nom: float, fs: float, prefilter: FirFilter | None = None,
                 mode: str = "cycles"):
        if mode not in ("cycles", "mean"):
            raise ValueError(f"unknown aggregation mode {mode!r}")
        self.f_nom = f_nom
        self.fs = fs
        self.filter = prefilter if prefilter is not None else design_zc_prefilter(fs, f_nom)
        self.mode = mode
        self.timebase = None
        self.next_index = None  # expected global index of the next sample
        self.next_k = None
        self.last_k = None
        self._chain = _Chain()
        self._history = np.empty(0)
        self._prev = None  # (global index, filtered value) of last filtered sample
        self._covered = None  # (sec, frac) of last filtered sample
        self._pending = []

    # -- block intake -----------------------------------------------------

    def _global_start(self, block: SampleStream) -> int:
        if block.fs != self.fs:
            raise ValueError(f"block fs {block.fs} Hz differs from estimator fs {self.fs} Hz")
        tb = block.timebase
        if tb is self.timebase or tb == self.timebase:
            return block.index0
        if isinstance(tb, UniformTimebase) and isinstance(self.timebase, UniformTimebase):
            idx = self.timebase.index_of_ns(tb.t0_ns) + block.index0
            start = int(round(idx))
            if abs(idx - start) > 1e-3:
                raise ValueError("block is not aligned to the estimator's sample grid")
            return start
        raise ValueError("block uses a different timebase")

    def process_block(self, block: SampleStream) -> list[SecondAggregate]:
        """Consume one block and return every second it closes."""
        if len(block) == 0:
            return []
        if self.timebase is None:
            self.timebase = block.timebase
            self.next_index = block.index0
            sec, _ = block.times(0)
            self.next_k = int(sec)
        start = self._global_start(block)
        if start < self.next_index:
            raise ValueError(f"out-of-order block: starts at sample {start}, expected {self.next_index}")
        sec, _ = self.timebase.times(start + len(block) - 1)
        self.last_k = int(sec)
        if start > self.next_index:
            self._break()
        x = block.samples
        finite = np.isfinite(x)
        if finite.all():
            self._feed(x, start)
        else:
            edges = np.diff(np.concatenate(([0], finite.view(np.int8), [0])))
            run_starts = np.nonzero(edges == 1)[0]
            run_stops = np.nonzero(edges == -1)[0]
            pos = 0
            for a, b in zip(run_starts, run_stops):
                if a != pos:
                    self._break()
                self._feed(x[a:b], start + a)
                pos = b
            if pos != x.size:
                self._break()
        self.next_index = start + x.size
        out = self._pending + self._emit()
        self._pending = []
        return out

    def _break(self):
        # seconds closed by the data before the gap still use the old chain
        self._pending.extend(self._emit())
        self._chain = _Chain()
        self._history = np.empty(0)
        self._prev = None

    def _feed(self, x: np.ndarray, start: int):
        h = self.filter.coefficients
        L = h.size - 1
        seg = np.concatenate((self._history, x)) if self._history.size else x
        seg_start = start - self._history.size
        if seg.size <= L:
            self._history = seg.copy()
            return
        y = np.convolve(seg, h, "valid")
        first = seg_start + L // 2  # global index of y[0]
        if self._prev is not None and self._prev[0] == first - 1:
            u = np.concatenate(([self._prev[1]], y))
            base = first - 1
        else:
            u = y
            base = first
        n, frac = _detect(u)
        if n.size:
            n, frac = _canonical(n + base, frac)
            sec, f = self.timebase.times(n, frac)
            self._chain.extend(sec, f, self.f_nom)
        last = first + y.size - 1
        self._prev = (last, y[-1])
        sec, f = self.timebase.times(last)
        self._covered = (int(sec), float(f))
        self._history = seg[-L:].copy()

    # -- emission -----------------------------------------------------------

    def _closable_until(self) -> int:
        """Largest k whose closing boundary k+1 lies strictly before coverage."""
        if self._covered is None:
            return self.next_k - 1
        sec, frac = self._covered
        return sec - 1 if frac > 0 else sec - 2

    def _emit(self) -> list[SecondAggregate]:
        k_max = min(self._closable_until(), self.last_k)
        if self._prev is None:
            # current segment has no filtered data yet: nothing can close
            return []
        if k_max < self.next_k:
            return []
        ks = np.arange(self.next_k, k_max + 1)
        out = _aggregate(self._chain.sec, self._chain.frac, self._chain.bad, ks,
                         self.mode, self.timebase)
        self.next_k = k_max + 1
        keep = _count_at_or_before(self._chain.sec, self._chain.frac,
                                   np.array([self.next_k]))[0] - 1
        self._chain.trim_before(max(int(keep), 0))
        return out

    def finish(self) -> list[SecondAggregate]:
        """Emit the seconds the data end inside of; none of them can close."""
        if self.next_k is None or self.last_k is None:
            return []
        out = [SecondAggregate(k, math.nan, 0, QI_INVALID)
               for k in range(self.next_k, self.last_k + 1)]
        self.next_k = self.last_k + 1
        return out


def estimate_seconds(stream: SampleStream, f_nom: float, prefilter: FirFilter | None = None,
                     mode: str = "cycles") -> list[SecondAggregate]:
    """Whole-stream estimate: every UTC second touched by ``stream``."""
    est = FrequencyEstimator(f_nom, stream.fs, prefilter, mode)
    return est.process_block(stream) + est.finish()


def estimate_blocks(blocks, f_nom: float, fs: float, prefilter: FirFilter | None = None,
                    mode: str = "cycles") -> list[SecondAggregate]:
    est = FrequencyEstimator(f_nom, fs, prefilter, mode)
    out = []
    for block in blocks:
        out.extend(est.process_block(block))
    out.extend(est.finish())
    return out


def aggregates_to_arrays(aggregates) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    k = np.array([a.k for a in aggregates], dtype=np.int64)
    f = np.array([a.f_k for a in aggregates], dtype=np.float64)
    n = np.array([a.n_periods for a in aggregates], dtype=np.int64)
    qi = np.array([a.qi for a in aggregates], dtype=np.int64)
    return k, f, n, qi
