"""
Per-pulse cross-ambiguity TDoA estimation with incoherent accumulation.

Hops have unrelated carriers, so each pulse is correlated on its own and the
per-pulse peak lags are averaged. All windows are located by absolute time,
which lets a full pulse train and per-pulse guarded segments be mixed freely.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import fft as sp_fft
from scipy.constants import c as SPEED_OF_LIGHT

from src.simulation.fhss_signal import PulseDescriptor, SampledSignal
from src.utils.logger import Logger

logger = Logger(name="tdoa_estimator", component="estimation").get_logger()

DEFAULT_SEARCH_MARGIN = 500e-9


class EmptyPulseError(RuntimeError):
    """Raised when a pulse window holds no energy to correlate"""

    def __init__(self, pulse_index: int, sensor: Optional[int] = None):
        self.pulse_index = pulse_index
        self.sensor = sensor
        where = f"sensor {sensor + 1}, " if sensor is not None else ""
        super().__init__(f"all-zero segment at {where}pulse {pulse_index}")


@dataclass(frozen=True, eq=False)
class CafResult:
    lags: np.ndarray           # [s], integer-sample grid
    magnitudes: np.ndarray
    peak_lag: float            # [s], parabolic refinement of the grid peak
    peak_value: float

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.magnitudes))


@dataclass(frozen=True, eq=False)
class TdoaMeasurement:
    """
    Arrival-time differences tau_j - tau_1 of sensors 2..n against the reference.
    Zero-based sensor indices; values[k] belongs to sensor k + 1.
    """
    values: np.ndarray
    num_pulses: int
    ref_sensor: int = 0
    per_pulse: Optional[np.ndarray] = None     # (n - 1, N) peak lags
    peak_values: Optional[np.ndarray] = None   # (n - 1, N) CAF peak magnitudes
    sync_offsets: Optional[np.ndarray] = None  # injected synchronization errors

    @property
    def num_sensors(self) -> int:
        return int(self.values.size) + 1

    def range_differences(self) -> np.ndarray:
        return self.values * SPEED_OF_LIGHT


def default_search_window(sensor_positions: np.ndarray, margin: float = DEFAULT_SEARCH_MARGIN) -> float:
    """Scene diagonal over c plus a margin"""
    positions = np.asarray(sensor_positions, dtype=float)
    diagonal = float(np.linalg.norm(positions.max(axis=0) - positions.min(axis=0)))
    return diagonal / SPEED_OF_LIGHT + margin


def _parabolic_offset(magnitudes: np.ndarray, k: int) -> float:
    if k <= 0 or k >= magnitudes.size - 1:
        return 0.0
    left, mid, right = magnitudes[k - 1], magnitudes[k], magnitudes[k + 1]
    denom = left - 2.0 * mid + right
    if denom >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def _window(sig: SampledSignal, start: int, stop: int) -> np.ndarray:
    """Samples [start, stop) of sig, zero where the range leaves the signal"""
    out = np.zeros(stop - start, dtype=np.complex128)
    lo, hi = max(start, 0), min(stop, sig.num_samples)
    if lo < hi:
        out[lo - start:hi - start] = sig.samples[lo:hi]
    return out


def hop_band_mask(num_bins: int, sample_rate: float, offset: float, half_width: float) -> np.ndarray:
    """FFT-bin mask of |f - offset| <= half_width, with f wrapped to the sample band"""
    freqs = sp_fft.fftfreq(num_bins, d=1.0 / sample_rate)
    distance = np.mod(freqs - offset + 0.5 * sample_rate, sample_rate) - 0.5 * sample_rate
    return np.abs(distance) <= half_width


def caf_single_pulse(
    ref_sig: SampledSignal,
    other_sig: SampledSignal,
    pulse: PulseDescriptor,
    search_window: float,
    passband: Optional[float] = None,
) -> CafResult:
    """
        Cross-ambiguity function of one pulse, CAF(tau) = sum s1*(t) sj(t + tau)

        Args:
            ref_sig (SampledSignal): reference sensor signal, must cover the pulse span
            other_sig (SampledSignal): sensor j signal, zero-extended where the lag span leaves it
            pulse (PulseDescriptor): which pulse window to correlate
            search_window (float): lags are searched in [-search_window, +search_window]
            passband (float): half-width [Hz] of the band kept around the pulse hop, None keeps all
        Returns:
            out (CafResult): lag grid, |CAF|, refined peak lag
    """
    if ref_sig.sample_rate != other_sig.sample_rate:
        raise ValueError("both signals must share one sample rate")
    fs = ref_sig.sample_rate
    max_lag = int(np.ceil(search_window * fs))

    ref_start = ref_sig.index_of(pulse.start_time)
    ref_stop = ref_start + int(round(pulse.width * fs))
    if ref_start < 0 or ref_stop > ref_sig.num_samples:
        raise ValueError(f"reference signal does not cover pulse {pulse.index}")
    other_start = other_sig.index_of(pulse.start_time) - max_lag
    other_stop = other_sig.index_of(pulse.start_time) + (ref_stop - ref_start) + max_lag

    ref_window = ref_sig.samples[ref_start:ref_stop]
    other_window = _window(other_sig, other_start, other_stop)
    if not np.any(ref_window) or not np.any(other_window):
        raise EmptyPulseError(pulse.index)

    # circular correlation on a zero-padded grid; lags 0..len(other) - len(ref) never wrap
    num_bins = sp_fft.next_fast_len(other_window.size)
    spectrum = sp_fft.fft(other_window, num_bins) * np.conj(sp_fft.fft(ref_window, num_bins))
    if passband is not None:
        spectrum *= hop_band_mask(num_bins, fs, pulse.hop_freq - other_sig.center_freq, passband)
    caf = sp_fft.ifft(spectrum)[:other_window.size - ref_window.size + 1]
    magnitudes = np.abs(caf)

    # lag of output k is the absolute-time offset between the two windows
    ref_t0 = ref_sig.start_time + ref_start / fs
    other_t0 = other_sig.start_time + other_start / fs
    lags = (other_t0 - ref_t0) + np.arange(magnitudes.size) / fs

    k = int(np.argmax(magnitudes))
    peak_lag = lags[k] + _parabolic_offset(magnitudes, k) / fs
    return CafResult(lags=lags, magnitudes=magnitudes, peak_lag=float(peak_lag), peak_value=float(magnitudes[k]))


def estimate_tdoa_segments(
    received: Sequence[Sequence[SampledSignal]],
    pulses: Sequence[PulseDescriptor],
    search_window: float,
    passband: Optional[float] = None,
) -> TdoaMeasurement:
    """
        TDoA of every sensor against sensor 1 from per-pulse windows

        Args:
            received: received[sensor][pulse] covering that pulse
            pulses: pulse descriptors, len N
            search_window (float): CAF lag half-width [s]
            passband (float): hop-band half-width [Hz] kept by the CAF, see caf_single_pulse
        Returns:
            out (TdoaMeasurement): mean of the N per-pulse peak lags per sensor
    """
    num_sensors = len(received)
    if num_sensors < 2:
        raise ValueError(f"need at least 2 sensors, got {num_sensors}")
    if len(pulses) < 1:
        raise ValueError("need at least one pulse")

    per_pulse = np.empty((num_sensors - 1, len(pulses)))
    peaks = np.empty_like(per_pulse)
    for j in range(1, num_sensors):
        for p, pulse in enumerate(pulses):
            try:
                result = caf_single_pulse(received[0][p], received[j][p], pulse, search_window, passband)
            except EmptyPulseError as e:
                sensor = 0 if not np.any(received[0][p].samples) else j
                raise EmptyPulseError(e.pulse_index, sensor) from e
            per_pulse[j - 1, p] = result.peak_lag
            peaks[j - 1, p] = result.peak_value

    values = per_pulse.mean(axis=1)
    logger.debug(f"TDoA estimate over {len(pulses)} pulses: {np.round(values * 1e9, 3)} ns")
    return TdoaMeasurement(values=values, num_pulses=len(pulses), per_pulse=per_pulse, peak_values=peaks)


def estimate_tdoa(
    received: Sequence[SampledSignal],
    pulses: Sequence[PulseDescriptor],
    search_window: float,
    passband: Optional[float] = None,
) -> TdoaMeasurement:
    """TDoA from one full received signal per sensor, see estimate_tdoa_segments"""
    return estimate_tdoa_segments([[sig] * len(pulses) for sig in received], pulses, search_window, passband)


def rms_bandwidth(sig: SampledSignal, pulse: Optional[PulseDescriptor] = None,
                  passband: Optional[float] = None) -> float:
    """
        RMS (Gabor) bandwidth about the spectral centroid in rad/s, of one pulse if given.
        With a passband (needs the pulse) only the hop band the CAF keeps is counted.
    """
    samples = sig.samples
    if pulse is not None:
        start = sig.index_of(pulse.start_time)
        samples = samples[start:start + int(round(pulse.width * sig.sample_rate))]
    power = np.abs(sp_fft.fft(samples)) ** 2
    freqs = sp_fft.fftfreq(samples.size, d=1.0 / sig.sample_rate)
    if passband is not None:
        if pulse is None:
            raise ValueError("a passband needs the pulse it is centred on")
        power = power * hop_band_mask(samples.size, sig.sample_rate, pulse.hop_freq - sig.center_freq, passband)
    total = power.sum()
    if total == 0.0:
        raise ValueError("cannot take the bandwidth of an all-zero signal")
    centroid = np.sum(freqs * power) / total
    return float(2.0 * np.pi * np.sqrt(np.sum((freqs - centroid) ** 2 * power) / total))


def effective_snr(gamma_1: float, gamma_j: float) -> float:
    """1/gamma = (1/gamma_1 + 1/gamma_j + 1/(gamma_1 gamma_j)) / 2"""
    if gamma_1 <= 0 or gamma_j <= 0:
        raise ValueError("SNRs must be > 0")
    return 1.0 / (0.5 * (1.0 / gamma_1 + 1.0 / gamma_j + 1.0 / (gamma_1 * gamma_j)))


def crlb_single_pulse(bs: float, bn: float, tp: float, gamma_1: float, gamma_j: float) -> float:
    """
        Single-pulse TDoA accuracy sigma_t = 1 / (B_s sqrt(B_n Tp gamma))

        Args:
            bs (float): RMS signal bandwidth [rad/s]
            bn (float): noise bandwidth [Hz]
            tp (float): pulse width [s]
            gamma_1, gamma_j (float): linear SNRs of the two sensors
        Returns:
            out (float): standard deviation [s]
    """
    if bs <= 0 or bn <= 0 or tp <= 0:
        raise ValueError("bandwidths and pulse width must be > 0")
    gamma = effective_snr(gamma_1, gamma_j)
    return 1.0 / (bs * np.sqrt(bn * tp * gamma))


def pulse_errors_frame(tdoa: TdoaMeasurement, true_values: np.ndarray, trial: int) -> pd.DataFrame:
    """Per-pulse CAF peak errors as rows (trial, sensor_pair, pulse, error_ns)"""
    if tdoa.per_pulse is None:
        raise ValueError("measurement carries no per-pulse estimates")
    errors = tdoa.per_pulse - np.asarray(true_values)[:, None]
    pairs, pulses = np.meshgrid(np.arange(errors.shape[0]), np.arange(errors.shape[1]), indexing="ij")
    return pd.DataFrame({
        "trial": trial,
        "sensor_pair": [f"{tdoa.ref_sensor + 1}-{j + 2}" for j in pairs.ravel()],
        "pulse": pulses.ravel() + 1,
        "error_ns": errors.ravel() * 1e9,
    })
