"""
Propagation channels between the emitter and each sensor.

A channel realization is a tapped delay line held constant for one coherence
block. AWGN is a single unit tap, TRGR adds one ground-reflected ray from
image-method geometry, WLAN_F draws independent Rayleigh taps under an
exponential power-delay profile.
"""
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.constants import c as SPEED_OF_LIGHT

from src.simulation.fhss_signal import SampledSignal, delay_response
from src.utils.logger import Logger

logger = Logger(name="channel", component="simulation").get_logger()

DEFAULT_COHERENCE_TIME = 80e-3
WLAN_F_TAPS_PER_SPREAD = 7.0  # 169 taps at 160 MSPS span 7 x 150 ns


class ChannelError(ValueError):
    """Raised when a channel or link geometry violates its invariants"""


class ChannelKind(str, Enum):
    AWGN = "AWGN"
    TRGR = "TRGR"
    WLAN_F = "WLAN_F"


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    delays: np.ndarray         # tau_l [s], relative to the first path
    gains: np.ndarray          # h_l, complex
    kind: ChannelKind
    coherence_time: float = DEFAULT_COHERENCE_TIME

    def __post_init__(self):
        if self.delays.shape != self.gains.shape or self.delays.size < 1:
            raise ChannelError("delays and gains must be non-empty and of equal length")
        if self.delays[0] != 0.0:
            raise ChannelError("the first path must have zero relative delay")
        if np.any(np.diff(self.delays) < 0):
            raise ChannelError("tap delays must be nondecreasing")
        if self.kind is ChannelKind.AWGN and (self.delays.size != 1 or self.gains[0] != 1):
            raise ChannelError("an AWGN channel has exactly one unit tap")
        if self.kind is ChannelKind.TRGR and self.delays.size != 2:
            raise ChannelError("a TRGR channel has exactly two taps")

    @property
    def taps(self) -> List[Tuple[float, complex]]:
        return list(zip(self.delays.tolist(), self.gains.tolist()))

    @property
    def num_taps(self) -> int:
        return int(self.delays.size)

    @property
    def max_delay(self) -> float:
        return float(self.delays[-1])

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))


@dataclass(frozen=True)
class LinkGeometry:
    emitter_pos: Tuple[float, ...]
    sensor_pos: Tuple[float, ...]
    emitter_height: float = 1.5
    sensor_height: float = 2.0
    reflection_coeff: complex = -1.0

    @property
    def ground_distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.emitter_pos, self.sensor_pos)))

    @property
    def los_length(self) -> float:
        return float(np.hypot(self.ground_distance, self.emitter_height - self.sensor_height))

    @property
    def reflected_length(self) -> float:
        # image of the emitter mirrored below the ground plane
        return float(np.hypot(self.ground_distance, self.emitter_height + self.sensor_height))


def awgn_taps(coherence_time: float = DEFAULT_COHERENCE_TIME) -> ChannelRealization:
    return ChannelRealization(np.zeros(1), np.ones(1, dtype=np.complex128), ChannelKind.AWGN, coherence_time)


def default_wlan_f_taps(sample_rate: float, rms_delay_spread: float) -> int:
    return int(round(WLAN_F_TAPS_PER_SPREAD * rms_delay_spread * sample_rate)) + 1


def draw_wlan_f(
    sample_rate: float,
    rms_delay_spread: float,
    num_taps: int,
    rng: np.random.Generator,
    coherence_time: float = DEFAULT_COHERENCE_TIME,
) -> ChannelRealization:
    """
        Draw one Rayleigh tapped-delay-line realization with an exponential power profile

        Args:
            sample_rate (float): tap spacing is 1 / sample_rate
            rms_delay_spread (float): sigma_tau of the profile P_l ~ exp(-tau_l / sigma_tau)
            num_taps (int): number of taps L_h
            rng (Generator): random stream
        Returns:
            out (ChannelRealization): taps with E[sum |h_l|^2] = 1
    """
    if num_taps < 1:
        raise ChannelError(f"num_taps must be >= 1, got {num_taps}")
    if rms_delay_spread <= 0:
        raise ChannelError(f"rms_delay_spread must be > 0, got {rms_delay_spread}")

    delays = np.arange(num_taps) / sample_rate
    profile = np.exp(-delays / rms_delay_spread)
    profile /= profile.sum()
    gains = np.sqrt(profile / 2.0) * (rng.standard_normal(num_taps) + 1j * rng.standard_normal(num_taps))
    return ChannelRealization(delays, gains, ChannelKind.WLAN_F, coherence_time)


def trgr_taps(
    geom: LinkGeometry,
    carrier_freq: Optional[float] = None,
    coherence_time: float = DEFAULT_COHERENCE_TIME,
) -> ChannelRealization:
    """
        Two-ray ground reflection taps, LOS normalized to unit magnitude.
        The reflected tap carries exp(-j2pi f (d2 - d1)/c) only when carrier_freq is
        given; apply_channel already rotates each tap by its RF propagation phase.
    """
    if min(geom.emitter_height, geom.sensor_height) <= 0:
        raise ChannelError("TRGR needs positive antenna heights")
    if geom.ground_distance == 0.0:
        raise ChannelError("TRGR is undefined at zero ground distance")

    d1 = geom.los_length
    d2 = geom.reflected_length
    excess = (d2 - d1) / SPEED_OF_LIGHT
    reflected = geom.reflection_coeff / d2
    if carrier_freq is not None:
        reflected *= np.exp(-2j * np.pi * carrier_freq * (d2 - d1) / SPEED_OF_LIGHT)

    delays = np.array([0.0, excess])
    gains = np.array([1.0 / d1, reflected], dtype=np.complex128) * d1
    return ChannelRealization(delays, gains, ChannelKind.TRGR, coherence_time)


def channel_response(freqs: np.ndarray, chan: ChannelRealization, delay: float, center_freq: float,
                     sample_rate: float) -> np.ndarray:
    """Sum_k g_k exp(-j2pi(f + f_c)(eps_k + delay)) on an FFT frequency grid"""
    taps_in_samples = chan.delays * sample_rate
    on_grid = np.allclose(taps_in_samples, np.round(taps_in_samples), rtol=0.0, atol=1e-9)
    if on_grid and chan.num_taps > 2:
        # integer-spaced taps: the tap sum over the FFT grid is itself a DFT
        coeffs = np.zeros(freqs.size, dtype=np.complex128)
        rotated = chan.gains * np.exp(-2j * np.pi * center_freq * chan.delays)
        np.add.at(coeffs, np.round(taps_in_samples).astype(np.int64) % freqs.size, rotated)
        response = sp_fft.fft(coeffs)
    else:
        response = np.zeros(freqs.size, dtype=np.complex128)
        for tap_delay, gain in zip(chan.delays, chan.gains):
            response += gain * delay_response(freqs, tap_delay, center_freq)
    return response * delay_response(freqs, delay, center_freq)


def apply_channel(
    sig: SampledSignal,
    chan: ChannelRealization,
    propagation_delay: float,
    snr_db: Optional[float],
    rng: np.random.Generator,
    noise_bandwidth: Optional[float] = None,
) -> SampledSignal:
    """
        Received signal of one sensor: delayed multipath copies plus complex AWGN

        Args:
            sig (SampledSignal): transmitted signal (zero outside the pulses)
            chan (ChannelRealization): taps of this emitter-to-sensor link
            propagation_delay (float): LOS delay tau_j >= 0 [s]
            snr_db (float): in-pulse SNR over noise_bandwidth, None or inf for no noise
            rng (Generator): random stream for the noise
            noise_bandwidth (float): bandwidth the SNR refers to, defaults to the full sample band
        Returns:
            out (SampledSignal): received samples on the input time axis
    """
    if propagation_delay < 0:
        raise ChannelError(f"propagation delay must be >= 0, got {propagation_delay}")
    if propagation_delay + chan.max_delay >= sig.duration:
        raise ChannelError("total channel delay does not fit inside the signal window")

    freqs = sp_fft.fftfreq(sig.num_samples, d=1.0 / sig.sample_rate)
    response = channel_response(freqs, chan, propagation_delay, sig.center_freq, sig.sample_rate)
    clean = sp_fft.ifft(sp_fft.fft(sig.samples) * response)

    if snr_db is None or np.isinf(snr_db):
        return sig.with_samples(clean)

    pulse_region = sig.samples != 0
    if not np.any(pulse_region):
        raise ChannelError("cannot set an in-pulse SNR on an all-zero signal")
    signal_power = float(np.mean(np.abs(clean[pulse_region]) ** 2))
    bandwidth = sig.sample_rate if noise_bandwidth is None else noise_bandwidth
    noise_var = signal_power * sig.sample_rate / (bandwidth * 10.0 ** (snr_db / 10.0))
    noise = np.sqrt(noise_var / 2.0) * (
        rng.standard_normal(sig.num_samples) + 1j * rng.standard_normal(sig.num_samples)
    )
    return sig.with_samples(clean + noise)


def inject_sync_error(tdoa, alpha: float, rng: np.random.Generator):
    """Add independent Uniform[-alpha, alpha] synchronization errors to every TDoA"""
    if alpha < 0:
        raise ChannelError(f"sync error bound must be >= 0, got {alpha}")
    # drawn even at alpha = 0, rounds consume the same stream for every alpha
    offsets = alpha * rng.uniform(-1.0, 1.0, size=tdoa.values.shape)
    return replace(tdoa, values=tdoa.values + offsets, sync_offsets=offsets)
