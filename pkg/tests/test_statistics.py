"""
Statistical checks against the reference scenarios at full sample rate.
These run hundreds of trials and are excluded by default: pytest -m slow
"""
import numpy as np
import pytest

from src.config.scenario import load_config
from src.estimation.tdoa_estimator import crlb_single_pulse, rms_bandwidth
from src.experiments.montecarlo import run_campaign, run_tdoa_diagnostic
from src.localization.locator import Algorithm
from src.simulation.fhss_signal import generate_pulse_segments

pytestmark = pytest.mark.slow

THREADS = 4

ML, GN, BF = Algorithm.ML, Algorithm.LS_BF_GN, Algorithm.LS_BF


def _p90(preset, *overrides):
    scenario = load_config(preset=preset, overrides=list(overrides)).to_scenario()
    result = run_campaign(scenario, threads=THREADS)
    assert len(result.failures) == 0
    return {algorithm: cdf.percentile(90) for algorithm, cdf in result.cdfs.items()}


def _within(value, reference, tolerance=0.5):
    return (1 - tolerance) * reference <= value <= (1 + tolerance) * reference


def _tdoa_errors(preset, *overrides):
    scenario = load_config(preset=preset, overrides=list(overrides)).to_scenario()
    errors, failures = run_tdoa_diagnostic(scenario, threads=THREADS)
    assert not failures
    return errors


@pytest.fixture(scope="module")
def trgr_p90():
    return {alpha: _p90(f"fig2_alpha{alpha}") for alpha in (0, 10, 20)}


def test_trgr_per_pulse_errors_stay_within_ten_ns():
    errors = _tdoa_errors("fig4", "num_trials=50")["error_ns"].to_numpy()
    assert np.mean(np.abs(errors) <= 10.0) >= 0.95


def test_trgr_localization_without_sync_error(trgr_p90):
    p90 = trgr_p90[0]
    assert 0.5 <= p90[ML] <= 1.5
    assert 0.5 <= p90[GN] <= 1.5
    assert 0.9 <= p90[BF] <= 2.7
    assert p90[ML] <= p90[BF]


def test_trgr_localization_with_twenty_ns_sync_error(trgr_p90):
    p90 = trgr_p90[20]
    assert p90[ML] <= p90[GN] <= p90[BF]
    for algorithm, reference in ((ML, 4.4), (GN, 5.8), (BF, 11.0)):
        assert _within(p90[algorithm], reference)


def test_sync_error_never_improves_the_fix(trgr_p90):
    for algorithm in Algorithm:
        assert trgr_p90[0][algorithm] <= trgr_p90[10][algorithm] <= trgr_p90[20][algorithm]


def test_averaging_helps_under_sync_error():
    single = _p90("fig3_navg1", "num_trials=200")
    averaged = _p90("fig3", "num_trials=200")
    for algorithm in Algorithm:
        assert averaged[algorithm] < single[algorithm]
    assert 0.75 <= averaged[ML] <= 2.25


def test_wlan_f_localization():
    single = _p90("fig5_navg1", "num_trials=200")
    averaged = _p90("fig5", "num_trials=100")
    assert single[ML] < single[GN] < single[BF]
    for algorithm in Algorithm:
        assert averaged[algorithm] < single[algorithm]
    assert _within(averaged[ML], 10.0)
    assert _within(averaged[GN], 10.0)


def test_wlan_f_tdoa_spread_dwarfs_trgr():
    trgr = np.std(_tdoa_errors("fig4", "num_trials=30")["error_ns"])
    wlan = np.std(_tdoa_errors("fig6", "num_trials=30")["error_ns"])
    assert wlan >= 10.0 * trgr


@pytest.mark.parametrize("snr_db", [5.0, 10.0, 20.0])
def test_awgn_spread_follows_the_bound(snr_db):
    overrides = ["kind='AWGN'", f"snr_db={snr_db}", "num_trials=40"]
    config = load_config(preset="fig2_alpha0", overrides=overrides)
    fhss = config.to_fhss_params().validate()
    errors = _tdoa_errors("fig2_alpha0", *overrides)

    segments, pulses = generate_pulse_segments(fhss, 0.0, np.random.default_rng(fhss.seed))
    gamma = 10.0 ** (snr_db / 10.0)
    bound_ns = 1e9 * crlb_single_pulse(rms_bandwidth(segments[0], pulses[0], fhss.hop_passband),
                                       fhss.noise_bandwidth, fhss.pulse_width, gamma, gamma)

    single = np.std(errors["error_ns"])
    assert 0.5 * bound_ns <= single <= 2.0 * bound_ns

    # mean over the N pulses of each round and pair
    accumulated = np.std(errors.groupby(["trial", "sensor_pair"])["error_ns"].mean())
    assert single / accumulated == pytest.approx(np.sqrt(fhss.num_pulses), rel=0.25)
