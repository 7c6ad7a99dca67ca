from dataclasses import replace

import numpy as np
import pytest
from scipy.constants import c as SPEED_OF_LIGHT

from src.estimation.tdoa_estimator import (
    EmptyPulseError,
    caf_single_pulse,
    crlb_single_pulse,
    default_search_window,
    effective_snr,
    estimate_tdoa,
    estimate_tdoa_segments,
    hop_band_mask,
    pulse_errors_frame,
    rms_bandwidth,
)
from src.simulation.channel import apply_channel, awgn_taps
from src.simulation.fhss_signal import FhssParams, SampledSignal, generate_pulse_segments, generate_pulse_train

GUARD = 2e-6
WINDOW = 1e-6


def _received(segments, delays, snr_db, rng):
    return [[apply_channel(s, awgn_taps(), d, snr_db, rng, noise_bandwidth=1.5e6) for s in segments]
            for d in delays]


def test_caf_peak_at_integer_delay(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
    received = _received(segments, [0.0, 10 / small_fhss.sample_rate], None, rng)

    result = caf_single_pulse(received[0][0], received[1][0], pulses[0], WINDOW)

    assert result.peak_lag == pytest.approx(500e-9, abs=0.1e-9)
    assert result.peak_value == pytest.approx(result.magnitudes.max())
    assert result.lags[result.peak_index] == pytest.approx(500e-9, abs=1e-12)
    assert result.lags[0] == pytest.approx(-WINDOW, abs=0.5 / small_fhss.sample_rate)
    assert result.lags[-1] == pytest.approx(WINDOW, abs=0.5 / small_fhss.sample_rate)


def test_fractional_tdoa_noiseless(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
    delays = [100e-9, 112.3e-9, 87.4e-9, 300.5e-9]
    received = _received(segments, delays, None, rng)

    tdoa = estimate_tdoa_segments(received, pulses, WINDOW)

    np.testing.assert_allclose(tdoa.values, np.subtract(delays[1:], delays[0]), atol=2.5e-9)
    assert tdoa.per_pulse.shape == (3, 4)
    assert tdoa.num_pulses == 4
    assert tdoa.num_sensors == 4


def test_full_train_and_segments_agree(small_fhss, rng):
    train, pulses = generate_pulse_train(small_fhss)
    segments, _ = generate_pulse_segments(small_fhss, GUARD)
    delays = [0.0, 100e-9, 200e-9, 50e-9]

    from_train = estimate_tdoa([apply_channel(train, awgn_taps(), d, None, rng) for d in delays], pulses, WINDOW)
    from_segments = estimate_tdoa_segments(_received(segments, delays, None, rng), pulses, WINDOW)

    np.testing.assert_allclose(from_train.values, np.subtract(delays[1:], delays[0]), atol=0.1e-9)
    np.testing.assert_allclose(from_train.values, from_segments.values, atol=1e-11)
    assert from_train.per_pulse.shape == (3, small_fhss.num_pulses)


def test_noisy_spread_follows_the_bound(small_fhss, rng):
    errors = []
    for _ in range(20):
        segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
        received = _received(segments, [0.0, 0.0, 0.0], 10.0, rng)
        errors.append(estimate_tdoa_segments(received, pulses, WINDOW).per_pulse.ravel())
    empirical = np.std(np.concatenate(errors))

    segments, pulses = generate_pulse_segments(small_fhss, 0.0, rng)
    bound = crlb_single_pulse(rms_bandwidth(segments[0], pulses[0]), small_fhss.noise_bandwidth,
                              small_fhss.pulse_width, 10.0, 10.0)
    assert 0.5 * bound < empirical < 2.0 * bound


def test_empty_reference_pulse_is_reported(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
    received = _received(segments, [0.0, 0.0], None, rng)
    received[0][2] = received[0][2].with_samples(np.zeros(received[0][2].num_samples, dtype=complex))

    with pytest.raises(EmptyPulseError) as excinfo:
        estimate_tdoa_segments(received, pulses, WINDOW)
    assert excinfo.value.sensor == 0
    assert excinfo.value.pulse_index == 3


def test_lag_window_is_zero_extended(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, 0.1e-6, rng)
    result = caf_single_pulse(segments[0], segments[0], pulses[0], WINDOW)
    assert result.peak_lag == pytest.approx(0.0, abs=1e-12)
    assert result.lags[0] == pytest.approx(-WINDOW, abs=0.5 / small_fhss.sample_rate)


def test_reference_must_cover_the_pulse(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
    with pytest.raises(ValueError):
        caf_single_pulse(segments[0], segments[1], pulses[1], WINDOW)


def test_default_search_window():
    corners = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0], [50.0, 50.0]])
    expected = np.hypot(50.0, 50.0) / SPEED_OF_LIGHT + 500e-9
    assert default_search_window(corners) == pytest.approx(expected)


def test_rms_bandwidth_of_tones():
    fs, n = 1e6, 1000
    t = np.arange(n) / fs
    tone = SampledSignal(np.exp(2j * np.pi * 10e3 * t), fs)
    pair = SampledSignal(np.exp(2j * np.pi * 10e3 * t) + np.exp(-2j * np.pi * 10e3 * t), fs)

    assert rms_bandwidth(tone) == pytest.approx(0.0, abs=1.0)
    assert rms_bandwidth(pair) == pytest.approx(2 * np.pi * 10e3, rel=1e-6)
    with pytest.raises(ValueError):
        rms_bandwidth(SampledSignal(np.zeros(8, dtype=complex), fs))


def test_effective_snr_and_bound():
    assert effective_snr(10.0, 10.0) == pytest.approx(1.0 / (0.5 * (0.2 + 0.01)))
    assert effective_snr(1e9, 1e9) == pytest.approx(1e9, rel=1e-6)

    sigma = crlb_single_pulse(2e6, 1.5e6, 2e-3, 10.0, 10.0)
    assert sigma == pytest.approx(1.0 / (2e6 * np.sqrt(1.5e6 * 2e-3 * effective_snr(10.0, 10.0))))
    assert crlb_single_pulse(2e6, 1.5e6, 2e-3, 100.0, 100.0) < sigma
    with pytest.raises(ValueError):
        crlb_single_pulse(0.0, 1.5e6, 2e-3, 10.0, 10.0)
    with pytest.raises(ValueError):
        effective_snr(0.0, 10.0)


def test_pulse_errors_frame(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
    delays = np.array([0.0, 100e-9, 200e-9])
    tdoa = estimate_tdoa_segments(_received(segments, delays, None, rng), pulses, WINDOW)

    frame = pulse_errors_frame(tdoa, delays[1:] - delays[0], trial=7)

    assert list(frame.columns) == ["trial", "sensor_pair", "pulse", "error_ns"]
    assert len(frame) == 8
    assert set(frame["sensor_pair"]) == {"1-2", "1-3"}
    assert sorted(frame["pulse"].unique()) == [1, 2, 3, 4]
    assert (frame["trial"] == 7).all()
    assert frame["error_ns"].abs().max() < 2.5


def test_caf_symmetry_and_phase_invariance(small_fhss, rng):
    segments, pulses = generate_pulse_segments(small_fhss, GUARD, rng)
    received = _received(segments, [0.0, 10 / small_fhss.sample_rate], None, rng)
    ref, other, pulse = received[0][0], received[1][0], pulses[0]

    assert caf_single_pulse(ref, ref, pulse, WINDOW).peak_lag == pytest.approx(0.0, abs=1e-12)

    forward = caf_single_pulse(ref, other, pulse, WINDOW)
    backward = caf_single_pulse(other, ref, pulse, WINDOW)
    assert backward.peak_lag == pytest.approx(-forward.peak_lag, abs=0.25 / small_fhss.sample_rate)

    rotated = caf_single_pulse(ref, other.scaled(np.exp(0.7j)), pulse, WINDOW)
    np.testing.assert_allclose(rotated.magnitudes, forward.magnitudes, rtol=1e-9)


def test_single_pulse_estimate_is_the_caf_peak(small_fhss, rng):
    params = replace(small_fhss, num_pulses=1)
    segments, pulses = generate_pulse_segments(params, GUARD, rng)
    received = _received(segments, [0.0, 37e-9], 20.0, rng)

    tdoa = estimate_tdoa_segments(received, pulses, WINDOW)
    assert tdoa.values[0] == caf_single_pulse(received[0][0], received[1][0], pulses[0], WINDOW).peak_lag


def test_hop_band_mask_wraps_around_nyquist():
    mask = hop_band_mask(16, 16.0, offset=7.5, half_width=1.0)
    kept = np.fft.fftfreq(16, d=1.0 / 16.0)[mask]
    assert sorted(kept.tolist()) == [-8.0, 7.0]


def test_hop_band_bandwidth_ignores_out_of_band_leakage(small_fhss):
    segments, pulses = generate_pulse_segments(small_fhss, 0.0)
    full = rms_bandwidth(segments[0], pulses[0])
    in_band = rms_bandwidth(segments[0], pulses[0], small_fhss.hop_passband)
    assert in_band < full
    # continuous-phase 2FSK sits at +/- fsk_deviation around the hop
    assert in_band == pytest.approx(2 * np.pi * small_fhss.fsk_deviation, rel=0.15)
    with pytest.raises(ValueError):
        rms_bandwidth(segments[0], None, small_fhss.hop_passband)


def test_full_rate_noise_spread_follows_the_bound():
    # 160 MSPS over the 80 MHz hop band, where the CAF must discard out-of-band noise
    params = FhssParams(num_pulses=4, pulse_period=0.4e-3, pulse_width=0.2e-3, seed=21).validate()
    rng = np.random.default_rng(21)
    errors = []
    for _ in range(10):
        segments, pulses = generate_pulse_segments(params, GUARD, rng)
        received = [[apply_channel(s, awgn_taps(), 0.0, 10.0, rng, noise_bandwidth=params.noise_bandwidth)
                     for s in segments] for _ in range(4)]
        errors.append(estimate_tdoa_segments(received, pulses, WINDOW, params.hop_passband).per_pulse.ravel())
    empirical = np.std(np.concatenate(errors))

    segments, pulses = generate_pulse_segments(params, 0.0, rng)
    bound = crlb_single_pulse(rms_bandwidth(segments[0], pulses[0], params.hop_passband),
                              params.noise_bandwidth, params.pulse_width, 10.0, 10.0)
    assert 0.5 * bound < empirical < 2.0 * bound
    assert np.max(np.abs(np.concatenate(errors))) < 10 * bound
