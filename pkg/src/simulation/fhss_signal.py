"""
FHSS pulse-train synthesis in complex baseband.

Every pulse i occupies [(i-1)T0, (i-1)T0 + Tp) and carries a continuous-phase
2FSK waveform on its own hop frequency; the gaps between pulses are exactly zero.
Hop frequencies are absolute RF values, the samples are relative to the band center.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import fft as sp_fft

from src.utils.logger import Logger

logger = Logger(name="fhss_signal", component="simulation").get_logger()


class FhssParamsError(ValueError):
    """Raised when an FHSS parameter set violates its invariants"""


@dataclass(frozen=True)
class FhssParams:
    num_pulses: int = 10
    pulse_period: float = 8e-3          # T0 [s]
    pulse_width: float = 2e-3           # Tp [s]
    hop_band: Tuple[float, float] = (2400e6, 2480e6)  # [f_lo, f_hi] RF [Hz]
    sample_rate: float = 160e6
    symbol_rate: float = 1e6
    fsk_deviation: float = 250e3
    seed: int = 0

    @property
    def center_freq(self) -> float:
        return 0.5 * (self.hop_band[0] + self.hop_band[1])

    @property
    def noise_bandwidth(self) -> float:
        """Carson bandwidth of one 2FSK pulse, used as B_n"""
        return 2.0 * self.fsk_deviation + self.symbol_rate

    @property
    def hop_passband(self) -> float:
        """Half-width of the band the CAF keeps around each hop"""
        return self.fsk_deviation + self.symbol_rate

    @property
    def samples_per_pulse(self) -> int:
        return int(round(self.pulse_width * self.sample_rate))

    @property
    def total_samples(self) -> int:
        return int(round(self.num_pulses * self.pulse_period * self.sample_rate))

    def pulse_start_sample(self, index: int) -> int:
        """First sample of pulse `index` (1-based)"""
        return int(round((index - 1) * self.pulse_period * self.sample_rate))

    def validate(self) -> "FhssParams":
        f_lo, f_hi = self.hop_band
        if self.num_pulses < 1:
            raise FhssParamsError(f"num_pulses must be >= 1, got {self.num_pulses}")
        if not 0 < self.pulse_width <= self.pulse_period:
            raise FhssParamsError(
                f"need 0 < pulse_width <= pulse_period, got Tp={self.pulse_width}, T0={self.pulse_period}"
            )
        if not f_lo < f_hi:
            raise FhssParamsError(f"hop band must satisfy f_lo < f_hi, got {self.hop_band}")
        if self.sample_rate <= 0 or self.symbol_rate <= 0 or self.fsk_deviation < 0:
            raise FhssParamsError("sample_rate and symbol_rate must be > 0, fsk_deviation >= 0")
        if self.symbol_rate > self.sample_rate:
            raise FhssParamsError(
                f"symbol_rate {self.symbol_rate} exceeds sample_rate {self.sample_rate}"
            )
        occupied = (f_hi - f_lo) + 2.0 * self.fsk_deviation
        if occupied >= self.sample_rate:
            raise FhssParamsError(
                f"hop band plus FSK deviation ({occupied / 1e6:.3f} MHz) is not representable "
                f"at {self.sample_rate / 1e6:.3f} MSPS"
            )
        if self.samples_per_pulse < 1:
            raise FhssParamsError("pulse_width is shorter than one sample")
        return self


@dataclass(frozen=True, eq=False)
class SampledSignal:
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    center_freq: float = 0.0

    @property
    def num_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)

    def time_axis(self) -> np.ndarray:
        return self.start_time + np.arange(self.num_samples) / self.sample_rate

    def index_of(self, t: float) -> int:
        """Sample index of absolute time t"""
        return int(round((t - self.start_time) * self.sample_rate))

    def with_samples(self, samples: np.ndarray) -> "SampledSignal":
        return SampledSignal(samples, self.sample_rate, self.start_time, self.center_freq)

    def scaled(self, factor: complex) -> "SampledSignal":
        return self.with_samples(self.samples * factor)


@dataclass(frozen=True, eq=False)
class PulseDescriptor:
    index: int                 # 1..N
    hop_freq: float            # f_i [Hz], absolute RF
    init_phase: float          # phi_i [rad]
    bit_payload: np.ndarray = field(repr=False)
    start_time: float = 0.0    # (i-1) T0
    width: float = 0.0         # Tp

    @property
    def end_time(self) -> float:
        return self.start_time + self.width


def _draw_pulse(params: FhssParams, index: int, rng: np.random.Generator) -> PulseDescriptor:
    f_lo, f_hi = params.hop_band
    hop_freq = rng.uniform(f_lo, f_hi)
    init_phase = rng.uniform(0.0, 2.0 * np.pi)
    num_symbols = int(np.ceil(params.samples_per_pulse * params.symbol_rate / params.sample_rate - 1e-9))
    bits = rng.integers(0, 2, size=max(num_symbols, 1), dtype=np.int8)
    return PulseDescriptor(
        index=index,
        hop_freq=float(hop_freq),
        init_phase=float(init_phase),
        bit_payload=bits,
        start_time=(index - 1) * params.pulse_period,
        width=params.pulse_width,
    )


def _pulse_waveform(params: FhssParams, pulse: PulseDescriptor) -> np.ndarray:
    """Samples of one pulse, a_i(t) exp(j(2pi(f_i - f_c)t + phi_i)) on the absolute time axis"""
    fs = params.sample_rate
    n_samples = params.samples_per_pulse
    start = params.pulse_start_sample(pulse.index)
    n = np.arange(n_samples)

    symbol_index = np.minimum((n * params.symbol_rate / fs).astype(np.int64), pulse.bit_payload.size - 1)
    inst_freq = params.fsk_deviation * (2.0 * pulse.bit_payload[symbol_index] - 1.0)
    # continuous phase, zero at the first sample of the pulse
    fsk_phase = 2.0 * np.pi * (np.cumsum(inst_freq) - inst_freq) / fs

    t = (start + n) / fs
    carrier_phase = 2.0 * np.pi * (pulse.hop_freq - params.center_freq) * t + pulse.init_phase
    return np.exp(1j * (carrier_phase + fsk_phase))


def draw_pulses(params: FhssParams, rng: Optional[np.random.Generator] = None) -> List[PulseDescriptor]:
    params.validate()
    if rng is None:
        rng = np.random.default_rng(params.seed)
    return [_draw_pulse(params, i, rng) for i in range(1, params.num_pulses + 1)]


def generate_pulse_train(
    params: FhssParams, rng: Optional[np.random.Generator] = None
) -> Tuple[SampledSignal, List[PulseDescriptor]]:
    """
        Generate the full N-pulse train

        Args:
            params (FhssParams): waveform description
            rng (Generator): random stream, defaults to one seeded with params.seed
        Returns:
            out (SampledSignal, list of PulseDescriptor): samples and per-pulse draws
    """
    pulses = draw_pulses(params, rng)
    samples = np.zeros(params.total_samples, dtype=np.complex128)
    for pulse in pulses:
        start = params.pulse_start_sample(pulse.index)
        waveform = _pulse_waveform(params, pulse)
        stop = min(start + waveform.size, samples.size)
        samples[start:stop] = waveform[: stop - start]

    logger.debug(f"Generated {params.num_pulses} pulses, {samples.size} samples")
    return SampledSignal(samples, params.sample_rate, 0.0, params.center_freq), pulses


def generate_pulse_segments(
    params: FhssParams, guard: float, rng: Optional[np.random.Generator] = None
) -> Tuple[List[SampledSignal], List[PulseDescriptor]]:
    """
        Generate one zero-guarded window per pulse instead of the whole train.
        The windows hold the same samples generate_pulse_train would place at
        [(i-1)T0 - guard, (i-1)T0 + Tp + guard) and use the same random draws.
    """
    if guard < 0:
        raise FhssParamsError(f"guard must be >= 0, got {guard}")
    pulses = draw_pulses(params, rng)
    fs = params.sample_rate
    guard_samples = int(np.ceil(guard * fs))

    segments = []
    for pulse in pulses:
        waveform = _pulse_waveform(params, pulse)
        samples = np.zeros(waveform.size + 2 * guard_samples, dtype=np.complex128)
        samples[guard_samples:guard_samples + waveform.size] = waveform
        start_time = (params.pulse_start_sample(pulse.index) - guard_samples) / fs
        segments.append(SampledSignal(samples, fs, start_time, params.center_freq))
    return segments, pulses


def delay_response(freqs: np.ndarray, delay: float, center_freq: float = 0.0) -> np.ndarray:
    """Frequency response exp(-j2pi(f + f_c)tau) of a pure delay"""
    return np.exp(-2j * np.pi * (freqs + center_freq) * delay)


def fractional_delay(sig: SampledSignal, tau: float, rf_phase: bool = False) -> SampledSignal:
    """
        Band-limited (circular) time shift of a sampled signal by tau seconds

        Args:
            sig (SampledSignal): input signal
            tau (float): delay in seconds, |tau| must be below the signal duration
            rf_phase (bool): also apply the carrier rotation exp(-j2pi f_c tau)
        Returns:
            out (SampledSignal): delayed signal on the same time axis
    """
    if abs(tau) >= sig.duration:
        raise ValueError(f"delay {tau} s is not shorter than the signal ({sig.duration} s)")
    if tau == 0.0:
        return sig.with_samples(sig.samples.copy())

    freqs = sp_fft.fftfreq(sig.num_samples, d=1.0 / sig.sample_rate)
    spectrum = sp_fft.fft(sig.samples)
    spectrum *= delay_response(freqs, tau)
    shifted = sp_fft.ifft(spectrum)
    if rf_phase:
        shifted *= np.exp(-2j * np.pi * sig.center_freq * tau)
    return sig.with_samples(shifted)
