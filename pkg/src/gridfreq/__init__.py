"""Power grid frequency estimation by zero crossings.

Waveform samples are low-pass filtered without net delay, rising zero
crossings are interpolated between samples, and the periods between them
are aggregated into one value per UTC second.
"""

from gridfreq.dataio import (
    CampaignSeries,
    CampaignStats,
    Column,
    CsvFormatError,
    aggregate_10s_center,
    campaign_stats,
    fill_gaps_linear,
    join_locations,
    read_frequency_csv,
    read_waveform_csv,
    restore_absolute_frequency,
    write_frequency_csv,
    write_waveform_csv,
)
from gridfreq.fir import (
    FirFilter,
    apply_zero_phase,
    design_modulation_lowpass,
    design_zc_prefilter,
    frequency_response,
)
from gridfreq.stream import PpsTimebase, SampleStream, UniformTimebase
from gridfreq.synth import (
    InvalidSpec,
    SyntheticSpec,
    add_awgn,
    add_harmonics,
    instantaneous_frequency,
    make_fm_signal,
    measure_sinad,
    true_second_average,
)
from gridfreq.timebase import (
    ClockModel,
    PpsChannel,
    align_to_pps,
    apply_clock_model,
    clock_error_to_frequency_error,
    simulate_pps,
)
from gridfreq.zcfreq import (
    FrequencyEstimator,
    SecondAggregate,
    aggregate_seconds,
    estimate_seconds,
    find_rising_zero_crossings,
    mark_missing_seconds,
    period_frequencies,
)

__version__ = "0.1.0"
