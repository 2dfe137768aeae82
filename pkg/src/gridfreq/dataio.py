"""Frequency and waveform CSV files, gap filling, joins and campaign statistics.

Frequency files are semicolon separated with one row per UTC second::

    Time;f50_DE_KA;QI_DE_KA
    2019-07-09 00:00:00;-5.000;0

Deviations are in mHz relative to the nominal frequency named in the
column header (``f50_`` or ``f60_``).  Quality indicators: 0 valid,
1 invalid (only where a location was not recording in a joint file),
2 interpolated.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from gridfreq.stream import NS_PER_S, SampleStream

QI_OK, QI_INVALID, QI_INTERPOLATED = 0, 1, 2
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
_HEADER_F = re.compile(r"^f(50|60)_(.+)$")
_WAVEFORM_NAME = re.compile(r"^(?P<key>.+)_(?P<ts>\d{8}T\d{6})Z\.csv$")


class CsvFormatError(ValueError):
    """Malformed frequency file; ``row`` is the 1-based line number (header = 1)."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


@dataclass(eq=False)
class Column:
    name: str
    f_nom: int
    values: np.ndarray  # mHz
    qi: np.ndarray

    def __post_init__(self):
        if self.f_nom not in (50, 60):
            raise ValueError(f"f_nom must be 50 or 60, got {self.f_nom}")
        self.values = np.asarray(self.values, dtype=np.float64)
        self.qi = np.asarray(self.qi, dtype=np.int64)
        if self.values.shape != self.qi.shape or self.values.ndim != 1:
            raise ValueError(f"column {self.name}: values and qi must be 1-D and equally long")


@dataclass(eq=False)
class CampaignSeries:
    """A regular 1 s grid starting at UTC second ``start`` with one or more locations."""

    start: int
    columns: list = field(default_factory=list)
    length: int | None = None

    def __post_init__(self):
        self.start = int(self.start)
        lengths = {c.values.size for c in self.columns}
        if self.length is None:
            self.length = min(lengths, default=0)
        if lengths - {self.length}:
            raise ValueError("all columns must have the series length")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate location names")

    def __len__(self) -> int:
        return self.length

    @property
    def seconds(self) -> np.ndarray:
        return self.start + np.arange(self.length, dtype=np.int64)

    @property
    def end(self) -> int:
        """Last second on the grid (``start - 1`` when empty)."""
        return self.start + self.length - 1

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self) -> list:
        return [c.name for c in self.columns]

    def absolute(self, name: str) -> np.ndarray:
        c = self.column(name)
        return restore_absolute_frequency(c.values, c.f_nom)


def format_time(sec: int) -> str:
    return datetime.fromtimestamp(int(sec), tz=timezone.utc).strftime(TIME_FORMAT)


def parse_time(text: str) -> int:
    dt = datetime.strptime(text, TIME_FORMAT).replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def restore_absolute_frequency(deviation_mhz, f_nom: float):
    """Absolute frequency in Hz from a deviation in mHz."""
    return np.asarray(deviation_mhz, dtype=np.float64) * 1e-3 + f_nom


def series_from_arrays(name: str, f_nom: int, k, f_hz, qi) -> CampaignSeries:
    """Build a single-location series from per-second estimates in Hz.

    ``k`` must be consecutive.  Invalid seconds (qi != 0 or NaN) are stored as
    zero with qi 1; ``fill_gaps_linear`` turns them into interpolated rows.
    """
    k = np.asarray(k, dtype=np.int64)
    f_hz = np.asarray(f_hz, dtype=np.float64)
    qi = np.asarray(qi, dtype=np.int64).copy()
    if k.size and np.any(np.diff(k) != 1):
        raise ValueError("seconds must be consecutive")
    bad = (qi != QI_OK) | ~np.isfinite(f_hz)
    qi[bad] = QI_INVALID
    dev = np.where(bad, 0.0, (f_hz - f_nom) * 1e3)
    start = int(k[0]) if k.size else 0
    return CampaignSeries(start, [Column(name, f_nom, dev, qi)], int(k.size))


# ---------------------------------------------------------------- frequency CSV

def _format_value(v: float) -> str:
    return "%.3f" % v


def write_frequency_csv(series: CampaignSeries, sink=None) -> bytes:
    """Serialize ``series``; also writes to ``sink`` (path or binary file) if given."""
    for c in series.columns:
        if c.values.size != series.length:
            raise ValueError(f"column {c.name} is not on the series grid")
        if not np.all(np.isfinite(c.values)):
            raise ValueError(f"column {c.name} holds non-finite values")
        if np.any((c.qi < 0) | (c.qi > 2)):
            raise ValueError(f"column {c.name} holds qi outside 0..2")
    head = ["Time"]
    for c in series.columns:
        head += [f"f{c.f_nom}_{c.name}", f"QI_{c.name}"]
    lines = [";".join(head)]
    for i, sec in enumerate(series.seconds):
        row = [format_time(sec)]
        for c in series.columns:
            row += [_format_value(c.values[i]), str(int(c.qi[i]))]
        lines.append(";".join(row))
    data = ("\n".join(lines) + "\n").encode("ascii")
    if sink is not None:
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "wb") as fh:
                fh.write(data)
        else:
            sink.write(data)
    return data


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("ascii")
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read().decode("ascii")
    data = source.read()
    return data.decode("ascii") if isinstance(data, bytes) else data


def _scan(text: str, allow_qi3: bool, errors: list | None):
    """Parse frequency-file text.

    With ``errors`` None the first problem raises; otherwise problems are
    appended as CsvFormatError and scanning continues where possible.
    Returns the series, or None when the file could not be parsed.
    """
    def fail(msg, row):
        err = CsvFormatError(msg, row)
        if errors is None:
            raise err
        errors.append(err)

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        fail("empty file", None)
        return None
    head = lines[0].rstrip("\r").split(";")
    if head[0] != "Time" or len(head) < 3 or len(head) % 2 == 0:
        fail("header must read Time;fXX_LOC;QI_LOC[;...]", 1)
        return None
    specs = []
    for fcol, qcol in zip(head[1::2], head[2::2]):
        m = _HEADER_F.match(fcol)
        if not m or qcol != f"QI_{m.group(2)}":
            fail(f"bad column pair {fcol!r}/{qcol!r}", 1)
            return None
        specs.append((m.group(2), int(m.group(1))))
    n_cols = len(head)
    n = len(lines) - 1
    secs = np.zeros(n, np.int64)
    vals = np.zeros((len(specs), n))
    qis = np.zeros((len(specs), n), np.int64)
    allowed = (0, 1, 2, 3) if allow_qi3 else (0, 1, 2)
    n_errors = len(errors) if errors is not None else 0
    prev = None
    for i, line in enumerate(lines[1:]):
        row = i + 2
        parts = line.rstrip("\r").split(";")
        if len(parts) != n_cols:
            fail(f"expected {n_cols} fields, found {len(parts)}", row)
            prev = None
            continue
        try:
            secs[i] = parse_time(parts[0])
        except ValueError:
            fail(f"bad timestamp {parts[0]!r}", row)
            prev = None
            continue
        for j in range(len(specs)):
            v, q = parts[1 + 2 * j], parts[2 + 2 * j]
            try:
                x = float(v)
            except ValueError:
                fail(f"bad number {v!r}", row)
                continue
            if not math.isfinite(x):
                fail(f"non-finite value {v!r}", row)
            if not q.isdigit() or int(q) not in allowed:
                fail(f"unknown quality indicator {q!r}", row)
                continue
            vals[j, i], qis[j, i] = x, int(q)
        if prev is not None:
            step = secs[i] - prev
            if step == 0:
                fail(f"duplicate timestamp {parts[0]}", row)
            elif step < 0:
                fail(f"timestamp {parts[0]} goes backwards", row)
            elif step != 1:
                fail(f"gap of {step} s before {parts[0]}", row)
        prev = secs[i]
    if errors is not None and len(errors) > n_errors:
        return None
    start = int(secs[0]) if n else 0
    cols = [Column(name, f_nom, vals[j], qis[j]) for j, (name, f_nom) in enumerate(specs)]
    return CampaignSeries(start, cols, n)


def read_frequency_csv(source, allow_qi3: bool = False) -> CampaignSeries:
    """Parse and validate a frequency file (path, bytes, or file object)."""
    return _scan(_read_text(source), allow_qi3, None)


_STRICT_NUMBER = re.compile(r"^-?\d+\.\d{3}$")


def validate_frequency_csv(source, allow_qi3: bool = False):
    """All format violations of a frequency file, plus the series if it parsed.

    Beyond parsing this checks the three-decimal number format, that qi 1
    rows hold zeros, and that qi 1 appears only in multi-location files.
    """
    text = _read_text(source)
    errors: list = []
    series = _scan(text, allow_qi3, errors)
    for i, line in enumerate(text.split("\n")[1:]):
        parts = line.rstrip("\r").split(";")
        for v in parts[1::2]:
            if v and not _STRICT_NUMBER.match(v):
                errors.append(CsvFormatError(f"{v!r} is not a decimal with three fractional digits", i + 2))
    if series is not None:
        multi = len(series.columns) > 1
        for c in series.columns:
            flagged = np.nonzero(c.qi == QI_INVALID)[0]
            if flagged.size and not multi:
                errors.append(CsvFormatError(f"qi 1 in single-location file (column {c.name})", int(flagged[0]) + 2))
            nonzero = flagged[c.values[flagged] != 0]
            for r in nonzero[:20]:
                errors.append(CsvFormatError(f"qi 1 row of {c.name} is not zero-filled", int(r) + 2))
    errors.sort(key=lambda e: (e.row or 0))
    return errors, series


# ------------------------------------------------------------- transformations

def fill_gaps_linear(series: CampaignSeries) -> CampaignSeries:
    """Replace every qi != 0 entry by linear interpolation between valid neighbours.

    Entries before the first or after the last valid second take the nearest
    valid value.  All replaced entries get qi 2; qi 0 entries are untouched.
    """
    t = np.arange(series.length)
    cols = []
    for c in series.columns:
        good = c.qi == QI_OK
        if not good.any():
            raise ValueError(f"column {c.name} has no valid seconds to interpolate from")
        vals = c.values.copy()
        qi = c.qi.copy()
        bad = ~good
        # np.interp clamps to the end values outside the valid range
        vals[bad] = np.interp(t[bad], t[good], c.values[good])
        qi[bad] = QI_INTERPOLATED
        cols.append(Column(c.name, c.f_nom, vals, qi))
    return CampaignSeries(series.start, cols, series.length)


@dataclass(frozen=True)
class CampaignStats:
    begin: int
    end: int
    duration_days: float
    missing_percent: float
    longest_contiguous_days: float
    contiguous_begin: int | None

    @property
    def trustworthy_percent(self) -> float:
        return 100.0 - self.missing_percent

    def as_dict(self) -> dict:
        return {
            "begin": format_time(self.begin),
            "end": format_time(self.end),
            "duration_days": self.duration_days,
            "missing_percent": self.missing_percent,
            "longest_contiguous_days": self.longest_contiguous_days,
            "contiguous_begin": None if self.contiguous_begin is None else format_time(self.contiguous_begin),
        }


def _longest_run(mask: np.ndarray) -> tuple[int, int]:
    """(start, length) of the longest run of True values; (0, 0) when none."""
    if not mask.any():
        return 0, 0
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    d = np.diff(padded)
    starts = np.nonzero(d == 1)[0]
    ends = np.nonzero(d == -1)[0]
    i = int(np.argmax(ends - starts))
    return int(starts[i]), int(ends[i] - starts[i])


def campaign_stats(series: CampaignSeries, column: str | None = None) -> CampaignStats:
    c = series.column(column) if column is not None else series.columns[0]
    n = series.length
    if n == 0:
        raise ValueError("empty series")
    good = c.qi == QI_OK
    missing = 100.0 * (n - int(good.sum())) / n
    run_start, run_len = _longest_run(good)
    return CampaignStats(
        begin=series.start,
        end=series.end,
        duration_days=n / 86400.0,
        missing_percent=missing,
        longest_contiguous_days=run_len / 86400.0,
        contiguous_begin=series.start + run_start if run_len else None,
    )


def aggregate_10s_center(series: CampaignSeries, strict: bool = True) -> list[tuple[str, np.ndarray, np.ndarray, np.ndarray]]:
    """Means over 10 s windows aligned to multiples of 10 s, stamped at the window centre.

    Only complete windows are used.  In strict mode a window with any qi != 0
    second is invalid (qi 1, value 0); otherwise the mean runs over the
    valid seconds and the window is invalid only when none are valid.
    Returns ``(name, centre_seconds, mean_mhz, qi)`` per column.
    """
    first = -(-series.start // 10) * 10
    n_win = (series.end + 1 - first) // 10 if series.length else 0
    n_win = max(int(n_win), 0)
    offset = first - series.start
    centres = first + 10 * np.arange(n_win, dtype=np.int64) + 5
    out = []
    for c in series.columns:
        v = c.values[offset:offset + 10 * n_win].reshape(n_win, 10)
        good = c.qi[offset:offset + 10 * n_win].reshape(n_win, 10) == QI_OK
        count = good.sum(axis=1)
        valid = count == 10 if strict else count > 0
        mean = np.zeros(n_win)
        mean[valid] = np.where(good, v, 0.0)[valid].sum(axis=1) / count[valid]
        qi = np.where(valid, QI_OK, QI_INVALID).astype(np.int64)
        out.append((c.name, centres, mean, qi))
    return out


def join_locations(series_list) -> CampaignSeries:
    """Combine locations on the union time range; absent seconds become 0 with qi 1."""
    series_list = list(series_list)
    if not series_list:
        raise ValueError("nothing to join")
    if len(series_list) == 1:
        return series_list[0]
    nonempty = [s for s in series_list if s.length]
    start = min(s.start for s in nonempty)
    end = max(s.end for s in nonempty)
    n = end - start + 1
    cols = []
    for s in series_list:
        off = s.start - start
        for c in s.columns:
            vals = np.zeros(n)
            qi = np.full(n, QI_INVALID, dtype=np.int64)
            vals[off:off + s.length] = c.values
            qi[off:off + s.length] = c.qi
            cols.append(Column(c.name, c.f_nom, vals, qi))
    return CampaignSeries(start, cols, n)


# --------------------------------------------------------------- waveform files

def waveform_filename(key: str, t0_ns: int) -> str:
    sec = int(t0_ns) // NS_PER_S
    stamp = datetime.fromtimestamp(sec, tz=timezone.utc).strftime("%Y%m%dT%H%M%S")
    return f"{key}_{stamp}Z.csv"


def parse_waveform_filename(name: str) -> tuple[str, int]:
    """(location key, UTC start second) from a waveform file name."""
    m = _WAVEFORM_NAME.match(os.path.basename(name))
    if not m:
        raise ValueError(f"{name!r} is not a <KEY>_<yyyyMMddTHHmmss>Z.csv file name")
    dt = datetime.strptime(m.group("ts"), "%Y%m%dT%H%M%S").replace(tzinfo=timezone.utc)
    return m.group("key"), int(dt.timestamp())


def write_waveform_csv(stream: SampleStream, directory, key: str) -> str:
    """One sample per line, shortest round-trip decimals; returns the file path.

    Sample ``n`` belongs to ``t0 + n / fs``; the name carries t0 to 1 s.
    """
    path = os.path.join(directory, waveform_filename(key, stream.t0_ns))
    with open(path, "w", newline="\n") as fh:
        fh.writelines(repr(float(x)) + "\n" for x in stream.samples)
    return path


def iter_waveform_chunks(path, chunk: int = 250_000):
    """Yield float arrays of up to ``chunk`` samples; blank or 'nan' lines give NaN."""
    with open(path, "r") as fh:
        buf = []
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            try:
                buf.append(float(s) if s else math.nan)
            except ValueError:
                raise CsvFormatError(f"bad sample {s!r}", lineno) from None
            if len(buf) >= chunk:
                yield np.array(buf)
                buf = []
        if buf:
            yield np.array(buf)


def read_waveform_csv(path, fs: float) -> SampleStream:
    _, start = parse_waveform_filename(path)
    chunks = list(iter_waveform_chunks(path))
    samples = np.concatenate(chunks) if chunks else np.empty(0)
    return SampleStream(samples, fs, start * NS_PER_S)


__all__ = [
    "CampaignSeries", "Column", "CampaignStats", "CsvFormatError",
    "write_frequency_csv", "read_frequency_csv", "validate_frequency_csv", "restore_absolute_frequency",
    "fill_gaps_linear", "campaign_stats", "aggregate_10s_center", "join_locations",
    "write_waveform_csv", "read_waveform_csv", "iter_waveform_chunks",
    "waveform_filename", "parse_waveform_filename", "series_from_arrays",
    "format_time", "parse_time",
]
