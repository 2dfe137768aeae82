"""gridfreq command line.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 bad arguments.
Result tables are comma-separated CSV; every run also writes summary.json
into the output directory.  ``--figures`` adds PNG plots (needs matplotlib).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from gridfreq import analysis, dataio
from gridfreq.stream import NS_PER_S, SampleStream, UniformTimebase
from gridfreq.synth import ConstantModulation, InvalidSpec, SyntheticSpec, TrajectoryModulation, iter_signal_blocks
from gridfreq.zcfreq import FrequencyEstimator, aggregates_to_arrays

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_ARGS = 0, 1, 2, 3
DEFAULT_START = "2019-07-09 00:00:00"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _harmonic(text: str):
    try:
        k, a = text.split(":")
        return int(k), float(a)
    except ValueError:
        raise argparse.ArgumentTypeError(f"harmonic must look like ORDER:AMPLITUDE, got {text!r}")


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(type(x))


def _finite_or_str(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _write_table(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------------ estimate

def _file_blocks(paths, fs, chunk):
    named = []
    for p in paths:
        _, start = dataio.parse_waveform_filename(p)
        named.append((start, p))
    for start, p in sorted(named):
        tb = UniformTimebase(start * NS_PER_S, fs)
        offset = 0
        for x in dataio.iter_waveform_chunks(p, chunk):
            sec, frac = tb.times(offset)
            t0 = int(sec) * NS_PER_S + int(round(float(frac) * NS_PER_S))
            yield SampleStream(x, fs, t0, tb, offset)
            offset += x.size


def cmd_estimate(args) -> int:
    fs = _int_rate(args.fs)
    keys = {dataio.parse_waveform_filename(p)[0] for p in args.inputs}
    key = args.location or (keys.pop() if len(keys) == 1 else None)
    if key is None:
        raise UsageError("input files name several locations; pass --location")
    est = FrequencyEstimator(args.fnom, fs, mode=args.mode)
    aggs = []
    for block in _file_blocks(args.inputs, fs, args.chunk * fs):
        aggs.extend(est.process_block(block))
    aggs.extend(est.finish())
    if not aggs:
        raise dataio.CsvFormatError("no samples in the input")
    k, f, _, qi = aggregates_to_arrays(aggs)
    full = np.arange(k[0], k[-1] + 1)
    f_full = np.full(full.size, np.nan)
    qi_full = np.full(full.size, dataio.QI_INVALID)
    f_full[k - k[0]], qi_full[k - k[0]] = f, qi
    series = dataio.series_from_arrays(key, int(round(args.fnom)), full, f_full, qi_full)
    n_invalid = int(np.sum(series.columns[0].qi != 0))
    if not args.no_fill and n_invalid < len(series):
        series = dataio.fill_gaps_linear(series)
    out = _ensure_dir(args.out)
    path = os.path.join(out, f"{key}.csv")
    dataio.write_frequency_csv(series, path)
    valid = qi_full == 0
    summary = {
        "command": "estimate", "location": key, "rows": len(series),
        "begin": dataio.format_time(series.start), "end": dataio.format_time(series.end),
        "invalid_seconds": n_invalid, "filled": not args.no_fill,
        "mean_frequency_hz": float(np.mean(f_full[valid])) if valid.any() else None,
        "output": path,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    if args.figures:
        from gridfreq import plotting
        plotting.plot_series(series.seconds, series.columns[0].values,
                             os.path.join(out, f"{key}.png"), key)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _int_rate(fs: float) -> int:
    if fs <= 0 or int(fs) != fs:
        raise UsageError(f"--fs must be a positive integer rate, got {fs}")
    return int(fs)


# --------------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    fs = _int_rate(args.fs)
    start = dataio.parse_time(args.start)
    if args.trajectory:
        series = dataio.read_frequency_csv(args.trajectory)
        col = series.column(args.column) if args.column else series.columns[0]
        m = col.values
        if args.duration:
            if args.duration > m.size:
                raise UsageError("trajectory is shorter than --duration")
            m = m[:args.duration]
        mod, d_f, n = TrajectoryModulation(m, 1.0, fs), 1e-3, m.size * fs
    else:
        if not args.duration or args.duration <= 0:
            raise UsageError("--duration (seconds) is required without --trajectory")
        n = args.duration * fs
        mod, d_f = None, 0.0
        if args.deviation:
            mod, d_f = ConstantModulation(1.0, n), args.deviation * 1e-3
    spec = SyntheticSpec(args.fnom, fs, n, mod, D_f=d_f, A_nom=args.amplitude,
                         harmonics=args.harmonic or (), snr_db=args.snr,
                         seed=args.seed, t0_ns=start * NS_PER_S)
    out = _ensure_dir(args.out)
    path = os.path.join(out, dataio.waveform_filename(args.location, spec.t0_ns))
    with open(path, "w", newline="\n") as fh:
        for block in iter_signal_blocks(spec, 10 * fs):
            fh.writelines(repr(float(x)) + "\n" for x in block.samples)
    summary = {"command": "synth", "output": path, "samples": n, "fs": fs,
               "f_nom": args.fnom, "snr_db": args.snr, "seed": args.seed,
               "harmonics": [list(h) for h in spec.harmonics]}
    _write_json(os.path.join(out, "summary.json"), summary)
    print(path)
    return EXIT_OK


# -------------------------------------------------------------------- sweeps

def _sweep_rows(results):
    return [[_finite_or_str(r.x), repr(r.max_error), repr(r.rmse), r.n, int(r.marker)] for r in results]


def _sweep_json(results):
    return [{"x": _finite_or_str(r.x), "max_error_hz": r.max_error, "rmse_hz": r.rmse,
             "n": r.n, "marker": r.marker} for r in results]


def cmd_noise_sweep(args) -> int:
    fs = _int_rate(args.fs)
    duration = args.duration or 3600
    if duration < 10:
        raise UsageError("--duration must be at least 10 s")
    res = analysis.noise_sweep(args.snr, duration, args.fnom, fs, args.seed)
    out = _ensure_dir(args.out)
    _write_table(os.path.join(out, "noise_sweep.csv"),
                 ["snr_db", "max_error_hz", "rmse_hz", "n_seconds", "sinad_marker"], _sweep_rows(res))
    _write_json(os.path.join(out, "summary.json"),
                {"command": "noise-sweep", "duration_s": duration, "seed": args.seed,
                 "f_nom": args.fnom, "fs": fs, "results": _sweep_json(res)})
    if args.figures:
        from gridfreq import plotting
        plotting.plot_sweep(res, os.path.join(out, "noise_sweep.png"), "SNR (dB)")
    _print_sweep(res, "snr_db")
    return EXIT_OK


def cmd_phase_sweep(args) -> int:
    fs = _int_rate(args.fs)
    if args.trajectory:
        series = dataio.read_frequency_csv(args.trajectory)
        col = series.column(args.column) if args.column else series.columns[0]
        if np.any(col.qi != 0):
            print(f"note: {int(np.sum(col.qi != 0))} seconds of the trajectory are not qi 0", file=sys.stderr)
        traj, source = col.values, args.trajectory
    else:
        traj = analysis.synthetic_broadband_trajectory(3 * 3600, args.rms, args.seed)
        source = f"synthetic (rms {args.rms} mHz, seed {args.seed})"
    if traj.size < 3600:
        raise ValueError(f"trajectory covers {traj.size} s; at least one hour is required")
    offset = args.offset if args.offset is not None else (3600 if not args.trajectory else 0)
    duration = args.duration
    if duration is None and not args.trajectory:
        duration = 3600
    if any(not 0 < c <= 0.5 for c in args.cutoffs):
        raise UsageError("cutoffs must lie in (0, 0.5] Hz")
    res = analysis.phase_sweep(traj, args.cutoffs, args.fnom, fs, duration, offset)
    out = _ensure_dir(args.out)
    _write_table(os.path.join(out, "phase_sweep.csv"),
                 ["cutoff_hz", "max_error_hz", "rmse_hz", "n_seconds", "marker"], _sweep_rows(res))
    _write_json(os.path.join(out, "summary.json"),
                {"command": "phase-sweep", "trajectory": source, "offset_s": offset,
                 "f_nom": args.fnom, "fs": fs, "results": _sweep_json(res)})
    if args.figures:
        from gridfreq import plotting
        plotting.plot_sweep(res, os.path.join(out, "phase_sweep.png"), "cutoff (Hz)", logx=True)
    _print_sweep(res, "cutoff_hz")
    return EXIT_OK


def _print_sweep(res, label):
    print(f"{label:>10} {'max (mHz)':>10} {'rmse (mHz)':>11}")
    for r in res:
        print(f"{r.x:>10g} {r.max_error * 1e3:>10.4f} {r.rmse * 1e3:>11.4f}")


# ------------------------------------------------------------------- compare

def cmd_compare(args) -> int:
    a = dataio.read_frequency_csv(args.a)
    b = dataio.read_frequency_csv(args.b)
    col_a = args.col_a or a.columns[0].name
    col_b = args.col_b or b.columns[0].name
    try:
        res = analysis.compare_series(a, col_a, b, col_b)
    except KeyError as exc:
        raise UsageError(f"no column {exc.args[0]!r}") from None
    except ValueError as exc:
        raise dataio.CsvFormatError(str(exc)) from None
    out = _ensure_dir(args.out)
    stats = res["stats"].as_dict()
    _write_table(os.path.join(out, "differences.csv"), ["time", "diff_hz"],
                 [[dataio.format_time(s), repr(float(d))] for s, d in zip(res["seconds"], res["diff"])])
    e, c = res["hist_edges"], res["hist_counts"]
    _write_table(os.path.join(out, "histogram.csv"), ["bin_low_hz", "bin_high_hz", "count"],
                 [[repr(float(e[i])), repr(float(e[i + 1])), int(c[i])] for i in range(c.size)])
    _write_table(os.path.join(out, "spectrum.csv"), ["frequency_hz", "amplitude_hz"],
                 [[repr(float(f)), repr(float(v))] for f, v in zip(res["freqs"], res["amplitude"])])
    _write_json(os.path.join(out, "summary.json"),
                {"command": "compare", "a": f"{args.a}:{col_a}", "b": f"{args.b}:{col_b}", "stats": stats})
    if args.figures:
        from gridfreq import plotting
        plotting.plot_comparison(res, os.path.join(out, "comparison.png"))
    print(json.dumps(stats, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- sim-devices

def cmd_sim_devices(args) -> int:
    with open(args.config) as fh:
        text = fh.read()
    try:
        cfg = analysis.load_sim_config(text)
    except (ValueError, KeyError) as exc:
        raise dataio.CsvFormatError(f"config: {exc}") from None
    if args.seed is not None:
        cfg = analysis.SimConfig(**{**cfg.__dict__, "seed": args.seed})
    if args.duration is not None:
        cfg = analysis.SimConfig(**{**cfg.__dict__, "duration_s": args.duration})
    out = _ensure_dir(args.out)
    paths = []
    for series in analysis.simulate_devices(cfg):
        p = os.path.join(out, f"{series.columns[0].name}.csv")
        dataio.write_frequency_csv(series, p)
        paths.append(p)
    _write_json(os.path.join(out, "summary.json"),
                {"command": "sim-devices", "config": args.config, "outputs": paths,
                 "duration_s": cfg.duration_s, "seed": cfg.seed})
    for p in paths:
        print(p)
    return EXIT_OK


# ------------------------------------------------------------ validate / stats

def cmd_validate(args) -> int:
    errors, series = dataio.validate_frequency_csv(args.file, allow_qi3=args.allow_qi3)
    report = {"file": args.file, "violations": [str(e) for e in errors]}
    if series is not None and len(series):
        report["stats"] = {c.name: dataio.campaign_stats(series, c.name).as_dict() for c in series.columns}
    print(json.dumps(report, indent=2))
    return EXIT_INVALID if errors else EXIT_OK


def cmd_stats(args) -> int:
    series = dataio.read_frequency_csv(args.file, allow_qi3=args.allow_qi3)
    if not len(series):
        raise dataio.CsvFormatError("file has no data rows")
    names = [args.column] if args.column else series.names()
    try:
        stats = {n: dataio.campaign_stats(series, n).as_dict() for n in names}
    except KeyError as exc:
        raise UsageError(f"no column {exc.args[0]!r}") from None
    print(json.dumps(stats, indent=2))
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridfreq", description="Zero-crossing grid frequency estimation and validation.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, out=True, signal=True):
        if signal:
            sp.add_argument("--fs", type=float, default=25000.0, help="sampling rate in Hz")
            sp.add_argument("--fnom", type=float, default=50.0, help="nominal frequency in Hz")
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--duration", type=int, default=None, help="seconds")
        if out:
            sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("estimate", help="waveform CSV files -> frequency CSV")
    sp.add_argument("inputs", nargs="+", help="<KEY>_<yyyyMMddTHHmmss>Z.csv waveform files")
    common(sp)
    sp.add_argument("--location", help="location key for the output column")
    sp.add_argument("--mode", choices=("cycles", "mean"), default="cycles")
    sp.add_argument("--no-fill", action="store_true", help="keep invalid seconds as qi 1 zeros")
    sp.add_argument("--chunk", type=int, default=10, help="seconds per processing block")
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("synth", help="write a synthetic waveform CSV")
    common(sp)
    sp.add_argument("--location", default="SYN")
    sp.add_argument("--start", default=DEFAULT_START, help="UTC start, 'YYYY-MM-DD HH:MM:SS'")
    sp.add_argument("--snr", type=float, default=None, help="white-noise SNR in dB")
    sp.add_argument("--harmonic", type=_harmonic, action="append", help="ORDER:AMPLITUDE, repeatable")
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--deviation", type=float, default=0.0, help="constant deviation in mHz")
    sp.add_argument("--trajectory", help="frequency CSV whose deviations modulate the signal")
    sp.add_argument("--column", help="trajectory column (default: first)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("noise-sweep", help="estimation error versus white-noise SNR")
    common(sp)
    sp.add_argument("--snr", type=_float_list, default=[20, 25, 30, 35, 40, 50, 60, math.inf],
                    help="comma-separated SNRs in dB ('inf' allowed)")
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(func=cmd_noise_sweep)

    sp = sub.add_parser("phase-sweep", help="estimation error versus modulation bandwidth")
    common(sp)
    sp.add_argument("--trajectory", help="1 s frequency CSV (default: synthetic broadband)")
    sp.add_argument("--column")
    sp.add_argument("--rms", type=float, default=50.0, help="synthetic trajectory RMS in mHz")
    sp.add_argument("--offset", type=int, default=None, help="excerpt start within the trajectory (s)")
    sp.add_argument("--cutoffs", type=_float_list, default=[0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5])
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(func=cmd_phase_sweep)

    sp = sub.add_parser("compare", help="statistics of the difference of two frequency CSVs")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--col-a")
    sp.add_argument("--col-b")
    common(sp, signal=False)
    sp.add_argument("--figures", action="store_true")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sim-devices", help="two simulated devices observing one signal")
    sp.add_argument("config", help="INI scenario file")
    sp.add_argument("--seed", type=int, default=None, help="override [signal] seed")
    sp.add_argument("--duration", type=int, default=None, help="override [signal] duration")
    common(sp, signal=False)
    sp.set_defaults(func=cmd_sim_devices)

    sp = sub.add_parser("validate", help="check a frequency CSV against the file format")
    sp.add_argument("file")
    sp.add_argument("--allow-qi3", action="store_true", help="accept quality indicator 3")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("stats", help="campaign statistics of a frequency CSV")
    sp.add_argument("file")
    sp.add_argument("--column")
    sp.add_argument("--allow-qi3", action="store_true")
    sp.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_ARGS
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gridfreq: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except InvalidSpec as exc:
        print(f"gridfreq: invalid signal: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except dataio.CsvFormatError as exc:
        print(f"gridfreq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"gridfreq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"gridfreq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
