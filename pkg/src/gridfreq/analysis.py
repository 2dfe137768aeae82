"""Validation experiments: error sweeps, device-to-device comparison, statistics."""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass

import numpy as np

from gridfreq.dataio import CampaignSeries, QI_OK, fill_gaps_linear, parse_time, series_from_arrays
from gridfreq.fir import design_modulation_lowpass, filter_sequence
from gridfreq.stream import NS_PER_S, concatenate
from gridfreq.synth import (
    SyntheticSpec,
    TrajectoryModulation,
    grid_like_trajectory,
    iter_signal_blocks,
    make_fm_signal,
    true_second_averages,
)
from gridfreq.timebase import ClockModel, align_to_pps, apply_clock_model
from gridfreq.zcfreq import aggregates_to_arrays, estimate_blocks

SINAD_MARKER_DB = 29.6  # lowest SINAD observed on the recording devices
SPECTRUM_POINTS = 1 << 16
HIST_BIN_HZ = 10e-6
BLOCK_SECONDS = 10


@dataclass(frozen=True)
class ComparisonStats:
    mean_error: float
    rmse: float
    max_abs: float
    median_abs: float
    p99_abs: float
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepResult:
    x: float
    max_error: float
    rmse: float
    n: int = 0
    marker: bool = False


def error_stats(diff) -> ComparisonStats:
    d = np.asarray(diff, dtype=np.float64)
    if d.size == 0:
        raise ValueError("no samples to compare")
    a = np.abs(d)
    return ComparisonStats(
        mean_error=float(d.mean()),
        rmse=float(np.sqrt(np.mean(d * d))),
        max_abs=float(a.max()),
        median_abs=float(np.median(a)),
        p99_abs=float(np.percentile(a, 99)),
        n=int(d.size),
    )


def difference_histogram(diff, bin_width: float = HIST_BIN_HZ) -> tuple[np.ndarray, np.ndarray]:
    """Counts on fixed-width bins spanning +/- max|diff|; returns (edges, counts)."""
    d = np.asarray(diff, dtype=np.float64)
    top = max(float(np.max(np.abs(d))) if d.size else 0.0, bin_width)
    n_half = int(math.ceil(top / bin_width))
    edges = bin_width * np.arange(-n_half, n_half + 1)
    counts, _ = np.histogram(d, bins=edges)
    return edges, counts


def amplitude_spectrum(diff, fs: float = 1.0, n_fft: int = SPECTRUM_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Single-sided amplitude spectrum of a Hann-windowed series.

    The series is truncated or zero-padded to ``n_fft`` points; amplitudes are
    scaled by the window sum so a full-scale tone reads its amplitude.
    """
    d = np.asarray(diff, dtype=np.float64)[:n_fft]
    if d.size == 0:
        raise ValueError("empty series")
    w = np.hanning(d.size) if d.size > 1 else np.ones(1)
    spec = np.abs(np.fft.rfft((d - d.mean()) * w, n_fft)) / w.sum()
    spec[1:] *= 2
    if n_fft % 2 == 0:
        spec[-1] /= 2
    return np.fft.rfftfreq(n_fft, 1.0 / fs), spec


def paired_differences(a: CampaignSeries, col_a: str, b: CampaignSeries, col_b: str):
    """Inner join on time; rows where either side has qi != 0 are dropped.

    Returns (seconds, a - b in Hz).
    """
    lo, hi = max(a.start, b.start), min(a.end, b.end)
    if hi < lo:
        raise ValueError("the two series do not overlap")
    ca, cb = a.column(col_a), b.column(col_b)
    sa = slice(lo - a.start, hi - a.start + 1)
    sb = slice(lo - b.start, hi - b.start + 1)
    keep = (ca.qi[sa] == QI_OK) & (cb.qi[sb] == QI_OK)
    if not keep.any():
        raise ValueError("no rows valid in both series")
    fa = ca.values[sa] * 1e-3 + ca.f_nom
    fb = cb.values[sb] * 1e-3 + cb.f_nom
    secs = np.arange(lo, hi + 1, dtype=np.int64)
    return secs[keep], (fa - fb)[keep]


def compare_series(a: CampaignSeries, col_a: str, b: CampaignSeries, col_b: str) -> dict:
    secs, d = paired_differences(a, col_a, b, col_b)
    edges, counts = difference_histogram(d)
    freqs, amp = amplitude_spectrum(d)
    return {"stats": error_stats(d), "seconds": secs, "diff": d,
            "hist_edges": edges, "hist_counts": counts, "freqs": freqs, "amplitude": amp}


# ----------------------------------------------------------------- sweeps

def _run_pipeline(spec: SyntheticSpec):
    aggs = estimate_blocks(iter_signal_blocks(spec, BLOCK_SECONDS * spec.fs), spec.f_nom, spec.fs)
    return aggregates_to_arrays(aggs)


def _inner_errors(spec: SyntheticSpec, reference=None) -> np.ndarray:
    """Errors on every fully covered second except the first and last."""
    k, f, _, qi = _run_pipeline(spec)
    n_sec = spec.duration // spec.fs
    sel = (k >= 1) & (k <= n_sec - 2)
    if np.any(qi[sel] != QI_OK):
        raise RuntimeError(f"{int(np.sum(qi[sel] != QI_OK))} inner seconds came back invalid")
    truth = spec.f_nom if reference is None else reference(k[sel])
    return f[sel] - truth


def noise_sweep(snrs, duration_s: int = 3600, f_nom: float = 50.0, fs: int = 25000,
                seed: int = 0, marker: bool = True) -> list[SweepResult]:
    """Constant-frequency sine plus white noise, one pipeline run per SNR.

    Every point uses the same seed.  ``inf`` gives the noise-free floor.
    """
    xs = [float(s) for s in snrs]
    if marker and SINAD_MARKER_DB not in xs:
        xs.append(SINAD_MARKER_DB)
    out = []
    for snr in sorted(set(xs)):
        spec = SyntheticSpec(f_nom, fs, (duration_s + 2) * fs,
                             snr_db=None if math.isinf(snr) else snr, seed=seed)
        e = _inner_errors(spec)
        out.append(SweepResult(snr, float(np.max(np.abs(e))), float(np.sqrt(np.mean(e * e))),
                               e.size, snr == SINAD_MARKER_DB))
    return out


def preserve_power(filtered: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rescale the fluctuating part of ``filtered`` to the variance of ``reference``."""
    mu = filtered.mean()
    sd, ref = filtered.std(), reference.std()
    if sd == 0:
        return filtered
    return mu + (filtered - mu) * (ref / sd)


def phase_sweep_modulations(trajectory_mhz, cutoffs, duration_s: int | None = None,
                            offset_s: int = 0, transition_width: float | None = None):
    """Low-passed, power-preserved 1 Hz modulations, one per cutoff.

    Filtering runs over the whole trajectory; an excerpt of
    ``duration_s + 2`` seconds (default: the rest of the trajectory) starting
    at ``offset_s`` is then rescaled to the unfiltered excerpt's variance.
    """
    traj = np.asarray(trajectory_mhz, dtype=np.float64)
    if traj.size < 3600:
        raise ValueError(f"trajectory covers {traj.size} s; at least one hour is required")
    n = traj.size - offset_s if duration_s is None else duration_s + 2
    if offset_s < 0 or offset_s + n > traj.size:
        raise ValueError("excerpt does not fit inside the trajectory")
    cutoffs = sorted(float(c) for c in cutoffs)
    if transition_width is None:
        transition_width = 0.1 * cutoffs[0]
    ref = traj[offset_s:offset_s + n]
    out = {}
    for c in cutoffs:
        lp = design_modulation_lowpass(c, 1.0, transition_width)
        y = filter_sequence(lp, traj)[offset_s:offset_s + n]
        out[c] = preserve_power(y, ref)
    return out


def phase_sweep(trajectory_mhz, cutoffs, f_nom: float = 50.0, fs: int = 25000,
                duration_s: int | None = None, offset_s: int = 0,
                transition_width: float | None = None) -> list[SweepResult]:
    """Error of the estimate against the true second averages, per modulation cutoff.

    The trajectory is in mHz and drives the modulator directly (1 mHz per unit).
    """
    mods = phase_sweep_modulations(trajectory_mhz, cutoffs, duration_s, offset_s, transition_width)
    out = []
    for c, m in mods.items():
        spec = SyntheticSpec(f_nom, fs, m.size * fs, TrajectoryModulation(m, 1.0, fs), D_f=1e-3)
        e = _inner_errors(spec, lambda ks, spec=spec: true_second_averages(spec, ks))
        out.append(SweepResult(c, float(np.max(np.abs(e))), float(np.sqrt(np.mean(e * e))), e.size))
    return out


def synthetic_broadband_trajectory(duration_s: int = 3 * 3600, rms_mhz: float = 50.0,
                                   seed: int = 11) -> np.ndarray:
    """Grid-like 1 Hz deviation trajectory in mHz with content up to 0.5 Hz."""
    return grid_like_trajectory(duration_s, rms_mhz, seed)


# ------------------------------------------------------------- two devices

@dataclass(frozen=True)
class DeviceConfig:
    name: str
    clock: ClockModel
    polarity: int = 1
    seed: int = 0


@dataclass(frozen=True)
class SimConfig:
    f_nom: int = 50
    fs: int = 25000
    duration_s: int = 600
    start: int = 1562630400  # 2019-07-09 00:00:00 UTC
    rms_mhz: float = 0.0
    cutoff: float = 0.5
    seed: int = 0
    snr_db: float | None = None
    devices: tuple = ()


def _float_or_none(text):
    if text is None or text.strip().lower() in ("", "none", "inf"):
        return None
    return float(text)


def load_sim_config(text: str) -> SimConfig:
    """Parse an INI scenario with [signal], [device1] and [device2] sections.

    Keys and defaults::

        [signal]
        f_nom = 50          ; 50 or 60
        fs = 25000
        duration = 600      ; seconds
        start = 2019-07-09 00:00:00
        rms_mhz = 0         ; 0 gives a constant-frequency signal
        cutoff = 0.5        ; modulation low-pass cutoff (Hz, at most 0.5)
        snr_db = none
        seed = 0

        [device1]
        name = DEV1
        ppm = 0
        offset_us = 0
        jitter_us = 0
        polarity = 1
        seed = 1
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(text)
    for sec in ("signal", "device1", "device2"):
        if not cp.has_section(sec):
            raise ValueError(f"missing [{sec}] section")
    s = cp["signal"]
    known = {"f_nom", "fs", "duration", "start", "rms_mhz", "cutoff", "snr_db", "seed"}
    extra = set(s) - known
    if extra:
        raise ValueError(f"unknown [signal] keys: {', '.join(sorted(extra))}")
    devices = []
    for i, sec in enumerate(("device1", "device2"), 1):
        d = cp[sec]
        extra = set(d) - {"name", "ppm", "offset_us", "jitter_us", "polarity", "seed"}
        if extra:
            raise ValueError(f"unknown [{sec}] keys: {', '.join(sorted(extra))}")
        clock = ClockModel(d.getfloat("ppm", 0.0), d.getfloat("offset_us", 0.0) * 1e-6,
                           d.getfloat("jitter_us", 0.0) * 1e-6)
        devices.append(DeviceConfig(d.get("name", f"DEV{i}"), clock, d.getint("polarity", 1),
                                    d.getint("seed", i)))
    if devices[0].name == devices[1].name:
        raise ValueError("device names must differ")
    cfg = SimConfig(
        f_nom=s.getint("f_nom", 50), fs=s.getint("fs", 25000),
        duration_s=s.getint("duration", 600),
        start=parse_time(s.get("start", "2019-07-09 00:00:00")),
        rms_mhz=s.getfloat("rms_mhz", 0.0), cutoff=s.getfloat("cutoff", 0.5),
        seed=s.getint("seed", 0), snr_db=_float_or_none(s.get("snr_db")), devices=tuple(devices),
    )
    if cfg.f_nom not in (50, 60):
        raise ValueError("f_nom must be 50 or 60")
    if cfg.duration_s < 10:
        raise ValueError("duration must be at least 10 s")
    if not 0 < cfg.cutoff <= 0.5:
        raise ValueError("cutoff must lie in (0, 0.5] Hz")
    if cfg.rms_mhz < 0:
        raise ValueError("rms_mhz must be non-negative")
    return cfg


def _true_signal(cfg: SimConfig):
    n_sec = cfg.duration_s + 2
    if cfg.rms_mhz > 0:
        traj = grid_like_trajectory(max(n_sec, 3600), cfg.rms_mhz, cfg.seed)
        m = phase_sweep_modulations(traj, [cfg.cutoff], n_sec - 2)[cfg.cutoff]
        mod, d_f = TrajectoryModulation(m, 1.0, cfg.fs), 1e-3
    else:
        mod, d_f = None, 0.0
    spec = SyntheticSpec(cfg.f_nom, cfg.fs, n_sec * cfg.fs, mod, D_f=d_f,
                         snr_db=cfg.snr_db, seed=cfg.seed, t0_ns=cfg.start * NS_PER_S)
    if cfg.snr_db is None:
        return spec, make_fm_signal(spec)
    return spec, concatenate(iter_signal_blocks(spec, spec.duration))


def simulate_devices(cfg: SimConfig) -> list[CampaignSeries]:
    """One true signal seen by each configured device, estimated after PPS alignment.

    Each device series covers the seconds ``start .. start + duration - 1``
    and is gap-filled as a single-location file would be.
    """
    _, true = _true_signal(cfg)
    out = []
    for dev in cfg.devices:
        dev_stream, pps = apply_clock_model(dev.clock, true, dev.seed, dev.polarity)
        aligned = align_to_pps(dev_stream, pps)
        aggs = estimate_blocks(aligned.blocks(BLOCK_SECONDS * cfg.fs), cfg.f_nom, cfg.fs)
        k, f, _, qi = aggregates_to_arrays(aggs)
        sel = (k >= cfg.start) & (k < cfg.start + cfg.duration_s)
        series = series_from_arrays(dev.name, cfg.f_nom, k[sel], f[sel], qi[sel])
        out.append(fill_gaps_linear(series))
    return out
