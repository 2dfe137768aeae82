import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridfreq.stream import SampleStream, concatenate
from gridfreq.synth import SyntheticSpec, TrajectoryModulation, grid_like_trajectory, iter_signal_blocks, make_fm_signal
from gridfreq.zcfreq import (
    QI_INVALID,
    QI_OK,
    FrequencyEstimator,
    ZeroCrossings,
    aggregate_seconds,
    aggregates_to_arrays,
    estimate_blocks,
    estimate_seconds,
    find_rising_zero_crossings,
    mark_missing_seconds,
    period_frequencies,
)

from oracles import aggregate_brute_force, ideal_crossing_times, sine_crossings_closed_form

FS = 25000


def _sine(f, phase, seconds, fs=FS, t0_ns=0):
    n = np.arange(int(seconds * fs))
    return SampleStream(np.sin(2 * np.pi * f * n / fs + phase), fs, t0_ns)


def _times(zcs):
    return zcs.sec + zcs.frac


# ------------------------------------------------------------- detection

def test_symmetric_interpolation():
    s = SampleStream(np.array([-0.5, 0.5]), FS)
    z = find_rising_zero_crossings(s)
    assert len(z) == 1
    assert z.sec[0] == 0 and z.frac[0] == pytest.approx(20e-6, abs=1e-15)


def test_exact_zero_sample_is_the_crossing():
    s = SampleStream(np.array([-1.0, 0.0, 0.0, 1.0]), 1000)
    z = find_rising_zero_crossings(s)
    assert len(z) == 1
    assert z.frac[0] == pytest.approx(0.001)


def test_no_crossings_in_positive_signal():
    assert len(find_rising_zero_crossings(SampleStream(np.ones(100) + 0.1, FS))) == 0


def test_sine_crossings_match_closed_form():
    s = _sine(50.0, 0.3, 1.0)
    z = _times(find_rising_zero_crossings(s))
    ref = sine_crossings_closed_form(50.0, 0.3, 1.0 - 1 / FS)
    assert z.size == 50 == ref.size
    assert np.max(np.abs(z - ref)) < 1e-6
    assert np.max(np.abs(np.diff(z) - 0.02)) < 1e-6


# ---------------------------------------------------------------- periods

def test_period_frequencies():
    p = period_frequencies(ZeroCrossings(np.array([0, 0]), np.array([0.0, 0.02])))
    assert p.f[0] == pytest.approx(50.0)
    p = period_frequencies(ZeroCrossings(np.zeros(3, np.int64), np.array([0.0, 0.0166667, 0.0333334])))
    assert np.all(np.abs(p.f - 60.0) < 0.01)
    with pytest.raises(ValueError):
        period_frequencies(ZeroCrossings(np.array([0]), np.array([0.1])))


def test_period_frequencies_constant_501():
    z = find_rising_zero_crossings(_sine(50.1, 1.0, 2.0))
    p = period_frequencies(z)
    assert np.max(np.abs(p.f - 50.1)) < 1e-6


# ------------------------------------------------------------- aggregation

def test_aggregate_against_brute_force():
    rng = np.random.default_rng(5)
    periods = 1 / (50 + rng.normal(0, 0.5, 800))
    t = 0.0137 + np.cumsum(periods)
    ks = np.arange(0, 14)
    zc = ZeroCrossings(np.floor(t).astype(np.int64), t - np.floor(t))
    got = aggregate_seconds(zc, ks)
    ref = aggregate_brute_force(t, ks)
    for a in got:
        f_ref, n_ref = ref[a.k]
        assert a.n_periods == n_ref
        if n_ref:
            assert a.f_k == pytest.approx(f_ref, rel=1e-12)
            assert a.n_periods / a.f_k == pytest.approx(
                (a.t_close[0] - a.t_open[0]) + (a.t_close[1] - a.t_open[1]), rel=1e-12)


def test_interval_chaining():
    z = find_rising_zero_crossings(_sine(49.73, 0.9, 6.0))
    aggs = aggregate_seconds(z, np.arange(0, 5))
    for a, b in zip(aggs, aggs[1:]):
        if a.qi == QI_OK and b.qi == QI_OK:
            assert a.t_close == b.t_open


def test_boundary_coincident_crossing_opens_the_interval():
    t = np.array([0.98, 1.0, 1.02, 1.5, 2.0, 2.02])
    zc = ZeroCrossings(np.floor(t).astype(np.int64), t - np.floor(t))
    (a,) = aggregate_seconds(zc, [1])
    assert a.t_open == (1, 0.0) and a.t_close == (2, 0.0)
    assert a.n_periods == 3


def test_first_second_without_opener_is_invalid():
    z = find_rising_zero_crossings(_sine(50.0, 0.5, 3.0))
    aggs = aggregate_seconds(z, [0, 1])
    assert aggs[0].qi == QI_INVALID and aggs[1].qi == QI_OK


def test_unsorted_crossings_rejected():
    zc = ZeroCrossings(np.array([0, 0]), np.array([0.5, 0.1]))
    with pytest.raises(ValueError):
        aggregate_seconds(zc, [0])


def test_sanity_band_invalidates_second():
    t = np.concatenate((np.arange(0, 1.0, 0.02), [1.0, 1.005], np.arange(1.02, 3.0, 0.02)))
    t = np.unique(np.round(t, 9))
    zc = ZeroCrossings(np.floor(t).astype(np.int64), t - np.floor(t))
    aggs = aggregate_seconds(zc, [1], f_nom=50.0)
    assert aggs[0].qi == QI_INVALID
    aggs = aggregate_seconds(zc, [1])
    assert aggs[0].qi == QI_OK


def test_mean_mode_close_to_cycles_mode():
    traj = grid_like_trajectory(3600, 1.0, 2, white_share=0.0)[:20]
    spec = SyntheticSpec(50.0, FS, 20 * FS, TrajectoryModulation(traj, 1.0, FS), D_f=0.05)
    s = make_fm_signal(spec)
    _, fc, _, qc = aggregates_to_arrays(estimate_seconds(s, 50.0, mode="cycles"))
    _, fm, _, qm = aggregates_to_arrays(estimate_seconds(s, 50.0, mode="mean"))
    ok = (qc == 0) & (qm == 0)
    assert np.max(np.abs(fc[ok] - fm[ok])) < 1e-6
    with pytest.raises(ValueError):
        estimate_seconds(s, 50.0, mode="median")


# ---------------------------------------------------------- period counts

def _counts(f, phase, seconds=6):
    s = _sine(f, phase, seconds)
    _, _, n, qi = aggregates_to_arrays(estimate_seconds(s, 50.0 if f < 55 else 60.0))
    return n[qi == 0]


@pytest.mark.parametrize("lo,hi", [(49, 50), (50, 51), (59, 60), (60, 61)])
def test_period_counts_per_interval(lo, hi):
    # a second holds floor(f) or ceil(f) whole periods
    rng = np.random.default_rng(lo)
    for _ in range(8):
        f = rng.uniform(lo, hi)
        n = _counts(f, rng.uniform(0, 2 * np.pi))
        assert set(n.tolist()) <= {lo, hi}


def test_integer_frequency_gives_exact_count():
    assert set(_counts(49.0, 0.7).tolist()) == {49}
    assert set(_counts(50.0, 2.1).tolist()) == {50}


# ---------------------------------------------------------- full pipeline

def test_constant_50hz_is_exact():
    s = _sine(50.0, 0.0, 12.0)
    _, f, _, qi = aggregates_to_arrays(estimate_seconds(s, 50.0))
    assert np.max(np.abs(f[qi == 0] - 50.0)) < 1e-6
    assert qi[0] == QI_INVALID and qi[-1] == QI_INVALID
    assert np.all(qi[1:-1] == QI_OK)


@pytest.mark.parametrize("c", [0.1, 10.0, -1.0, -3.0])
def test_gain_and_polarity_invariance(c):
    s = _sine(50.37, 0.4, 8.0)
    _, f0, _, q0 = aggregates_to_arrays(estimate_seconds(s, 50.0))
    _, f1, _, q1 = aggregates_to_arrays(estimate_seconds(s.with_samples(c * s.samples), 50.0))
    ok = (q0 == 0) & (q1 == 0)
    assert ok.sum() >= 6
    assert np.max(np.abs(f0[ok] - f1[ok])) < 1e-6


def test_pipeline_matches_ideal_crossing_oracle():
    traj = grid_like_trajectory(40, 50.0, seed=8)
    spec = SyntheticSpec(50.0, FS, 40 * FS, TrajectoryModulation(traj, 1.0, FS), D_f=1e-3)
    k, f, n, qi = aggregates_to_arrays(estimate_seconds(make_fm_signal(spec), 50.0))
    ref = aggregate_brute_force(ideal_crossing_times(spec), k)
    for i in np.nonzero(qi == 0)[0]:
        f_ref, n_ref = ref[k[i]]
        assert n[i] == n_ref
        assert abs(f[i] - f_ref) < 1e-7


# --------------------------------------------------------------- streaming

@pytest.fixture(scope="module")
def fm_stream():
    traj = grid_like_trajectory(12, 30.0, seed=4)
    spec = SyntheticSpec(50.0, FS, 12 * FS, TrajectoryModulation(traj, 1.0, FS), D_f=1e-3, snr_db=40, seed=3)
    return concatenate(iter_signal_blocks(spec, spec.duration))


def _as_tuple(aggs):
    k, f, n, qi = aggregates_to_arrays(aggs)
    return k.tolist(), f.tobytes(), n.tolist(), qi.tolist()


def test_one_second_blocks_equal_batch(fm_stream):
    batch = estimate_seconds(fm_stream, 50.0)
    blocks = estimate_blocks(fm_stream.blocks(FS), 50.0, FS)
    assert _as_tuple(batch) == _as_tuple(blocks)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 12 * FS - 1), min_size=1, max_size=30, unique=True))
def test_random_partitions_equal_batch(fm_stream, cuts):
    batch = _as_tuple(estimate_seconds(fm_stream, 50.0))
    edges = [0] + sorted(cuts) + [len(fm_stream)]
    parts = [fm_stream.slice(a, b) for a, b in zip(edges, edges[1:])]
    assert _as_tuple(estimate_blocks(parts, 50.0, FS)) == batch


def test_empty_block_list():
    est = FrequencyEstimator(50.0, FS)
    assert estimate_blocks([], 50.0, FS) == []
    assert est.process_block(SampleStream(np.empty(0), FS)) == []
    assert est.finish() == []


def test_dropped_block_flags_affected_seconds(fm_stream):
    blocks = list(fm_stream.blocks(FS))
    del blocks[5]  # second 5 missing
    k, f, n, qi = aggregates_to_arrays(estimate_blocks(blocks, 50.0, FS))
    bad = set(k[qi != 0].tolist())
    assert {4, 5} <= bad
    assert 7 not in bad and 3 not in bad
    assert k.tolist() == list(range(12))


def test_nan_samples_act_as_gap(fm_stream):
    x = fm_stream.samples.copy()
    x[int(6.2 * FS):int(6.4 * FS)] = np.nan
    gapped = fm_stream.with_samples(x)
    k, f, n, qi = aggregates_to_arrays(estimate_seconds(gapped, 50.0))
    # second 5 closes before t = 6 and keeps its data; second 6 loses periods
    assert qi[6] != 0
    assert np.all(qi[1:6] == 0) and np.all(qi[7:-1] == 0)
    blocks = aggregates_to_arrays(estimate_blocks(gapped.blocks(FS // 3), 50.0, FS))
    assert blocks[3].tolist() == qi.tolist()
    assert blocks[1].tobytes() == f.tobytes()


def test_out_of_order_block_rejected(fm_stream):
    est = FrequencyEstimator(50.0, FS)
    est.process_block(fm_stream.slice(FS, 2 * FS))
    with pytest.raises(ValueError):
        est.process_block(fm_stream.slice(0, FS))


def test_fs_mismatch_rejected():
    est = FrequencyEstimator(50.0, FS)
    with pytest.raises(ValueError):
        est.process_block(SampleStream(np.zeros(10), 20000))


# ------------------------------------------------------------ missing data

def test_mark_missing_full_coverage_keeps_qi():
    s = _sine(50.0, 1.0, 6.0)
    aggs = estimate_seconds(s, 50.0)
    marked = mark_missing_seconds(aggs, [(0.0, 6.0)])
    assert [a.qi for a in marked] == [a.qi for a in aggs]


def test_mark_missing_mid_second_period():
    s = _sine(50.0, 1.0, 6.0)
    aggs = estimate_seconds(s, 50.0)
    marked = mark_missing_seconds(aggs, [(0.0, 3.41), (3.44, 6.0)])
    qi = {a.k: a.qi for a in marked}
    assert qi[3] == QI_INVALID
    assert qi[2] == QI_OK and qi[4] == QI_OK


def test_mark_missing_first_half_second():
    s = _sine(50.0, 1.0, 6.0)
    aggs = estimate_seconds(s, 50.0)
    marked = mark_missing_seconds(aggs, [(0.0, 2.0), (2.5, 6.0)])
    qi = {a.k: a.qi for a in marked}
    assert qi[2] == QI_INVALID
    # second 1 closes on the last crossing before t=2 and survives only if
    # that crossing was acquired, which it was
    assert qi[1] == QI_OK
    marked = mark_missing_seconds(aggs, [(0.0, 1.99), (2.5, 6.0)])
    qi = {a.k: a.qi for a in marked}
    assert qi[1] == QI_INVALID and qi[2] == QI_INVALID
