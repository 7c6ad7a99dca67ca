import numpy as np
import pytest
from scipy import signal as sp_signal
from scipy.constants import c as SPEED_OF_LIGHT

from src.estimation.tdoa_estimator import TdoaMeasurement
from src.simulation.channel import (
    ChannelError,
    ChannelKind,
    ChannelRealization,
    LinkGeometry,
    apply_channel,
    awgn_taps,
    channel_response,
    default_wlan_f_taps,
    draw_wlan_f,
    inject_sync_error,
    trgr_taps,
)
from src.simulation.fhss_signal import SampledSignal, delay_response


def test_awgn_is_a_single_unit_tap():
    chan = awgn_taps()
    assert chan.taps == [(0.0, 1 + 0j)]
    assert chan.total_power == pytest.approx(1.0)


@pytest.mark.parametrize("delays, gains, kind", [
    ([1e-9], [1.0], ChannelKind.WLAN_F),
    ([0.0, 2e-9, 1e-9], [1.0, 0.5, 0.2], ChannelKind.WLAN_F),
    ([0.0], [0.5], ChannelKind.AWGN),
    ([0.0], [1.0], ChannelKind.TRGR),
])
def test_realization_invariants(delays, gains, kind):
    with pytest.raises(ChannelError):
        ChannelRealization(np.array(delays), np.array(gains, dtype=complex), kind)


def test_trgr_geometry_at_fifty_metres():
    ground = np.sqrt(50.0 ** 2 - 0.5 ** 2)
    geom = LinkGeometry((0.0, 0.0), (ground, 0.0), emitter_height=1.5, sensor_height=2.0)
    d2 = np.sqrt(ground ** 2 + 3.5 ** 2)

    chan = trgr_taps(geom)

    assert geom.los_length == pytest.approx(50.0)
    assert geom.reflected_length == pytest.approx(d2)
    assert chan.delays[1] == pytest.approx((d2 - 50.0) / SPEED_OF_LIGHT, rel=1e-9)
    assert chan.gains[0] == pytest.approx(1.0)
    assert chan.gains[1] == pytest.approx(-50.0 / d2)


def test_trgr_carrier_phase_is_optional():
    geom = LinkGeometry((0.0, 0.0), (30.0, 40.0))
    fc = 2.44e9
    plain = trgr_taps(geom)
    with_phase = trgr_taps(geom, carrier_freq=fc)

    path_difference = geom.reflected_length - geom.los_length
    expected = plain.gains[1] * np.exp(-2j * np.pi * fc * path_difference / SPEED_OF_LIGHT)
    assert with_phase.gains[1] == pytest.approx(expected)


def test_trgr_excess_delay_vanishes_far_away():
    geom = LinkGeometry((0.0, 0.0), (10_000.0, 0.0), emitter_height=2.0, sensor_height=2.0)
    assert trgr_taps(geom).max_delay < 1e-11


@pytest.mark.parametrize("geom", [
    LinkGeometry((0.0, 0.0), (10.0, 0.0), emitter_height=0.0),
    LinkGeometry((5.0, 5.0), (5.0, 5.0)),
])
def test_trgr_rejects_bad_geometry(geom):
    with pytest.raises(ChannelError):
        trgr_taps(geom)


def test_default_wlan_f_tap_count():
    assert default_wlan_f_taps(160e6, 150e-9) == 169


def test_wlan_f_average_power_is_unity(rng):
    powers = [draw_wlan_f(160e6, 150e-9, 169, rng).total_power for _ in range(10_000)]
    assert 0.98 <= np.mean(powers) <= 1.02


def test_wlan_f_profile_decays(rng):
    gains = np.array([draw_wlan_f(160e6, 150e-9, 169, rng).gains for _ in range(400)])
    mean_power = np.mean(np.abs(gains) ** 2, axis=0)
    assert mean_power[:24].sum() > mean_power[24:48].sum() > mean_power[48:72].sum()


def test_channel_response_fft_path_matches_direct_sum(rng):
    fs = 20e6
    chan = draw_wlan_f(fs, 150e-9, 8, rng)
    freqs = np.fft.fftfreq(64, d=1.0 / fs)
    direct = sum(g * delay_response(freqs, d, 2.44e9) for d, g in chan.taps) * delay_response(freqs, 1e-7, 2.44e9)

    np.testing.assert_allclose(channel_response(freqs, chan, 1e-7, 2.44e9, fs), direct, atol=1e-9)


def test_noiseless_integer_delay_is_a_shift(rng):
    x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    x[:20] = 0
    x[-20:] = 0
    sig = SampledSignal(x, 1e6)

    received = apply_channel(sig, awgn_taps(), 5e-6, None, rng)
    np.testing.assert_allclose(received.samples, np.roll(x, 5), atol=1e-12)


@pytest.mark.parametrize("noise_bandwidth, expected_var", [(None, 0.1), (0.25e6, 0.4)])
def test_in_pulse_snr(rng, noise_bandwidth, expected_var):
    x = np.zeros(200_000, dtype=complex)
    x[100_000:101_000] = 1.0
    sig = SampledSignal(x, 1e6)

    received = apply_channel(sig, awgn_taps(), 0.0, 10.0, rng, noise_bandwidth=noise_bandwidth)
    noise_var = np.mean(np.abs(received.samples[x == 0]) ** 2)
    assert noise_var == pytest.approx(expected_var, rel=0.03)


def test_apply_channel_rejects_bad_delays(rng):
    sig = SampledSignal(np.ones(100, dtype=complex), 1e6)
    with pytest.raises(ChannelError):
        apply_channel(sig, awgn_taps(), -1e-6, None, rng)
    with pytest.raises(ChannelError):
        apply_channel(sig, awgn_taps(), 1e-4, None, rng)


def test_sync_error_is_bounded(rng):
    tdoa = TdoaMeasurement(values=np.array([1e-8, -2e-8, 3e-8]), num_pulses=10)

    unchanged = inject_sync_error(tdoa, 0.0, rng)
    np.testing.assert_array_equal(unchanged.values, tdoa.values)
    np.testing.assert_array_equal(unchanged.sync_offsets, np.zeros(3))

    perturbed = inject_sync_error(tdoa, 20e-9, rng)
    np.testing.assert_allclose(perturbed.values - tdoa.values, perturbed.sync_offsets)
    assert np.all(np.abs(perturbed.sync_offsets) <= 20e-9)
    assert perturbed.num_pulses == 10

    with pytest.raises(ChannelError):
        inject_sync_error(tdoa, -1e-9, rng)


def test_sync_error_spread_matches_a_uniform_draw(rng):
    alpha = 20e-9
    tdoa = TdoaMeasurement(values=np.zeros(30_000), num_pulses=10)
    offsets = inject_sync_error(tdoa, alpha, rng).sync_offsets
    assert np.std(offsets) == pytest.approx(alpha / np.sqrt(3.0), rel=0.02)


def test_sync_error_consumes_the_stream_at_zero_bound():
    tdoa = TdoaMeasurement(values=np.zeros(3), num_pulses=10)
    with_zero, with_bound = np.random.default_rng(4), np.random.default_rng(4)
    inject_sync_error(tdoa, 0.0, with_zero)
    inject_sync_error(tdoa, 20e-9, with_bound)
    assert with_zero.standard_normal() == with_bound.standard_normal()


def test_wlan_f_blocks_are_uncorrelated(rng):
    first, second = [], []
    for _ in range(2000):
        first.append(draw_wlan_f(160e6, 150e-9, 169, rng).gains[:4])
        second.append(draw_wlan_f(160e6, 150e-9, 169, rng).gains[:4])
    first, second = np.array(first), np.array(second)
    for tap in range(4):
        a, b = first[:, tap], second[:, tap]
        rho = np.abs(np.vdot(a, b)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)
        assert rho < 0.1


def test_noiseless_channel_is_linear(rng):
    fs = 160e6
    x = SampledSignal(rng.standard_normal(2048) + 1j * rng.standard_normal(2048), fs, 0.0, 2.44e9)
    y = x.with_samples(rng.standard_normal(2048) + 1j * rng.standard_normal(2048))
    chan = draw_wlan_f(fs, 150e-9, 169, rng)
    a, b = 0.7 - 0.2j, -1.3 + 0.5j

    combined = apply_channel(x.with_samples(a * x.samples + b * y.samples), chan, 37.5e-9, None, rng)
    separate = (a * apply_channel(x, chan, 37.5e-9, None, rng).samples
                + b * apply_channel(y, chan, 37.5e-9, None, rng).samples)
    np.testing.assert_allclose(combined.samples, separate, atol=1e-9)


def test_two_taps_give_two_correlation_peaks(rng):
    fs = 160e6
    burst = np.zeros(4096, dtype=np.complex128)
    burst[1000:2000] = rng.standard_normal(1000) + 1j * rng.standard_normal(1000)
    sig = SampledSignal(burst, fs)
    chan = ChannelRealization(np.array([0.0, 100e-9]), np.ones(2, dtype=np.complex128), ChannelKind.WLAN_F)

    received = apply_channel(sig, chan, 0.0, None, rng)
    corr = np.abs(sp_signal.correlate(received.samples, burst, mode="full", method="fft"))
    lags = sp_signal.correlation_lags(received.num_samples, burst.size, mode="full")

    top_two = lags[np.argsort(corr)[-2:]]
    assert sorted(top_two.tolist()) == [0, 16]
