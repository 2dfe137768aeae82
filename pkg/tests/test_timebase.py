import numpy as np
import pytest

from gridfreq.stream import NS_PER_S, SampleStream
from gridfreq.synth import SyntheticSpec, TrajectoryModulation, grid_like_trajectory, make_fm_signal
from gridfreq.timebase import (
    ClockModel,
    align_to_pps,
    apply_clock_model,
    clock_error_to_frequency_error,
    cubic_resample,
    detect_pps_edges,
    simulate_pps,
)
from gridfreq.zcfreq import aggregates_to_arrays, estimate_seconds

FS = 25000
T0 = 1562630400


def _edge_true_times(pps, model):
    idx, labels = detect_pps_edges(pps)
    return idx / (FS * model.rate), labels


def test_ideal_pps_edges_on_seconds():
    m = ClockModel()
    pps = simulate_pps(m, 5.5, FS, seed=0, start_second=T0)
    t, labels = _edge_true_times(pps, m)
    # an edge sitting exactly on sample 0 may or may not be seen
    assert set(range(T0 + 1, T0 + 6)) <= set(labels.tolist())
    assert np.all(np.diff(labels) == 1)
    assert np.max(np.abs(t - (labels - T0))) < 1.0 / FS


def test_static_offset_delays_edges():
    m = ClockModel(static_offset=5e-6, pps_jitter=2e-7)
    ideal = ClockModel()
    t, _ = _edge_true_times(simulate_pps(m, 6, FS, seed=1), m)
    t0, _ = _edge_true_times(simulate_pps(ideal, 6, FS, seed=1), ideal)
    # ideal edges fall on samples; shifted ones pick up the error of the
    # linear threshold interpolation on the raised-cosine rise (< 0.26 us)
    d = t - t0
    assert np.all(np.abs(d - 5e-6) < 2e-7 + 2.6e-7)


def test_ppm_error_changes_samples_per_second():
    m = ClockModel(ppm_error=100)
    idx, _ = detect_pps_edges(simulate_pps(m, 8, FS, seed=0))
    np.testing.assert_allclose(np.diff(idx), FS * (1 + 1e-4), atol=0.01)


def test_pps_gap_has_no_edges():
    m = ClockModel()
    pps = simulate_pps(m, 30, FS, seed=0, start_second=T0, gaps=range(T0 + 10, T0 + 20))
    _, labels = detect_pps_edges(pps)
    assert not set(range(T0 + 10, T0 + 20)) & set(labels.tolist())
    assert T0 + 25 in labels


def test_simulate_pps_needs_khz_rate():
    with pytest.raises(ValueError):
        simulate_pps(ClockModel(), 5, 500)


@pytest.mark.parametrize("kw", [dict(ppm_error=300), dict(static_offset=3e-5), dict(pps_jitter=2e-6)])
def test_clock_model_limits(kw):
    with pytest.raises(ValueError):
        ClockModel(**kw)


def test_clock_error_formula():
    assert clock_error_to_frequency_error(1e-6, 50.0) == pytest.approx(2.5e-3, rel=1e-12)
    assert clock_error_to_frequency_error(1e-6, 60.0) == pytest.approx(3.6e-3, rel=1e-12)
    assert clock_error_to_frequency_error(0.0, 50.0) == 0.0
    with pytest.raises(ValueError):
        clock_error_to_frequency_error(-1e-6, 50.0)


def _true_signal(seconds, f=50.0):
    spec = SyntheticSpec(f, FS, seconds * FS, t0_ns=T0 * NS_PER_S)
    return make_fm_signal(spec)


def test_ideal_alignment_is_identity():
    sig = _true_signal(6)
    dev, pps = apply_clock_model(ClockModel(), sig, seed=0)
    aligned = align_to_pps(dev, pps)
    n = np.array([0, 1000, FS, 3 * FS + 17])
    got = aligned.time_seconds(n)
    want = sig.time_seconds(n)
    assert np.max(np.abs(got - want)) < 1e-3 / FS


def test_ideal_device_reproduces_signal():
    sig = _true_signal(3)
    dev, _ = apply_clock_model(ClockModel(), sig, seed=0)
    np.testing.assert_array_equal(dev.samples, sig.samples[:len(dev)])


def test_resampling_error_small_for_bandlimited_input():
    x = np.sin(2 * np.pi * 50 * np.arange(FS) / FS)
    pos = np.arange(10, FS - 10) + 0.37
    y = cubic_resample(x, pos)
    want = np.sin(2 * np.pi * 50 * pos / FS)
    assert np.sqrt(np.mean((y - want) ** 2)) < 1e-6


def _mean_freq(stream):
    _, f, _, qi = aggregates_to_arrays(estimate_seconds(stream, 50.0))
    return f[qi == 0]


def _valid_by_second(stream):
    k, f, _, qi = aggregates_to_arrays(estimate_seconds(stream, 50.0))
    return {int(a): b for a, b, q in zip(k, f, qi) if q == 0}


def _common_diff(a, b):
    ks = sorted(set(a) & set(b))
    assert len(ks) >= 5
    return np.array([a[k] - b[k] for k in ks])


def test_alignment_removes_ppm_error():
    sig = _true_signal(40)
    dev, pps = apply_clock_model(ClockModel(ppm_error=100), sig, seed=0)
    raw = _mean_freq(dev)
    aligned = _mean_freq(align_to_pps(dev, pps))
    # the device sees 50 Hz spread over fs * (1 + 1e-4) samples
    assert np.mean(raw) - 50.0 == pytest.approx(-5e-3, abs=2e-4)
    assert abs(np.mean(aligned) - 50.0) < 5e-6


def test_pps_gap_flags_seconds_and_recovers():
    sig = _true_signal(40)
    gap = range(T0 + 15, T0 + 25)
    dev, pps = apply_clock_model(ClockModel(ppm_error=40), sig, seed=0, gaps=gap)
    aligned = align_to_pps(dev, pps)
    k, f, _, qi = aggregates_to_arrays(estimate_seconds(aligned, 50.0))
    flagged = set(k[qi != 0].tolist())
    assert set(range(T0 + 14, T0 + 25)) <= flagged
    post = (k >= T0 + 26) & (k <= T0 + 37)
    assert np.all(qi[post] == 0)
    assert np.max(np.abs(f[post] - 50.0)) < 1e-5
    # timestamps after the gap are back on the true grid
    idx, labels = detect_pps_edges(pps)
    j = np.nonzero(labels == T0 + 30)[0][0]
    sec, frac = aligned.times(int(np.floor(idx[j])), idx[j] - np.floor(idx[j]))
    assert int(sec) + float(frac) == pytest.approx(T0 + 30, abs=1.0 / FS)


def test_identical_models_give_identical_devices():
    sig = _true_signal(4)
    m = ClockModel(ppm_error=-37, static_offset=3e-6, pps_jitter=5e-7)
    a, pa = apply_clock_model(m, sig, seed=11)
    b, pb = apply_clock_model(m, sig, seed=11)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(pa.samples, pb.samples)


def test_opposite_polarity_devices_agree_at_constant_frequency():
    sig = _true_signal(12)
    a, pa = apply_clock_model(ClockModel(), sig, seed=0, polarity=1)
    b, pb = apply_clock_model(ClockModel(), sig, seed=0, polarity=-1)
    d = _common_diff(_valid_by_second(align_to_pps(a, pa)), _valid_by_second(align_to_pps(b, pb)))
    assert np.max(np.abs(d)) < 1e-6


def test_offset_devices_differ_on_fm_input():
    traj = grid_like_trajectory(3600, 80.0, seed=6)[:20]
    spec = SyntheticSpec(50.0, FS, 20 * FS, TrajectoryModulation(traj, 1.0, FS), D_f=1e-3, t0_ns=T0 * NS_PER_S)
    sig = make_fm_signal(spec)
    a, pa = apply_clock_model(ClockModel(static_offset=5e-6), sig, seed=0)
    b, pb = apply_clock_model(ClockModel(static_offset=-5e-6), sig, seed=0, polarity=-1)
    d = _common_diff(_valid_by_second(align_to_pps(a, pa)), _valid_by_second(align_to_pps(b, pb)))
    assert np.max(np.abs(d)) > 1e-8
    assert np.max(np.abs(d)) < clock_error_to_frequency_error(10e-6, 50.0)


def test_apply_clock_model_checks():
    sig = SampleStream(np.zeros(FS), FS, T0 * NS_PER_S + 5)
    with pytest.raises(ValueError):
        apply_clock_model(ClockModel(), sig)
    with pytest.raises(ValueError):
        apply_clock_model(ClockModel(), _true_signal(2), polarity=2)
