"""
End-to-end Monte Carlo trials: random emitter, per-sensor channels, CAF TDoA,
synchronization error, the enabled solvers and N_avg-round averaging.

Every trial owns a random stream derived from (master_seed, trial index), so
results do not depend on how trials are scheduled across threads.
"""
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.constants import c as SPEED_OF_LIGHT
from tqdm import tqdm

from src.estimation.tdoa_estimator import (
    DEFAULT_SEARCH_MARGIN,
    TdoaMeasurement,
    default_search_window,
    estimate_tdoa_segments,
    pulse_errors_frame,
)
from src.localization.locator import (
    Algorithm,
    GridSpec,
    JacobianMode,
    LocationEstimate,
    SensorArray,
    average_estimates,
    locate,
)
from src.simulation.channel import (
    DEFAULT_COHERENCE_TIME,
    ChannelKind,
    ChannelRealization,
    LinkGeometry,
    apply_channel,
    awgn_taps,
    default_wlan_f_taps,
    draw_wlan_f,
    inject_sync_error,
    trgr_taps,
)
from src.simulation.fhss_signal import FhssParams, generate_pulse_segments
from src.utils.logger import Logger

logger = Logger(name="montecarlo", component="experiments").get_logger()

ABORT_FAILURE_RATIO = 0.10
GUARD_MARGIN = 1e-6


class ScenarioError(ValueError):
    """Raised when a scenario violates its invariants"""


class TrialFailure(RuntimeError):
    """A trial could not produce a fix; carries the trial index and its seed"""

    def __init__(self, trial_index: int, seed: Tuple[int, int], cause: Exception):
        self.trial_index = trial_index
        self.seed = seed
        self.cause = cause
        super().__init__(f"trial {trial_index} (seed {seed}) failed: {type(cause).__name__}: {cause}")


class CampaignAbortedError(RuntimeError):
    """Raised when more than 10% of the trials of a campaign fail"""


@dataclass(frozen=True)
class ChannelSettings:
    kind: ChannelKind = ChannelKind.TRGR
    emitter_height: float = 1.5
    sensor_height: float = 2.0
    reflection_coeff: complex = -1.0
    rms_delay_spread: float = 150e-9
    num_taps: Optional[int] = None       # derived from the delay spread when None
    coherence_time: float = DEFAULT_COHERENCE_TIME

    def taps_at(self, sample_rate: float) -> int:
        if self.num_taps is not None:
            return self.num_taps
        return default_wlan_f_taps(sample_rate, self.rms_delay_spread)

    def max_excess_delay(self, sample_rate: float) -> float:
        if self.kind is ChannelKind.WLAN_F:
            return (self.taps_at(sample_rate) - 1) / sample_rate
        if self.kind is ChannelKind.TRGR:
            # bounded by the image-method path difference at zero ground distance
            return 2.0 * min(self.emitter_height, self.sensor_height) / SPEED_OF_LIGHT
        return 0.0


@dataclass(frozen=True, eq=False)
class Scenario:
    sensors: SensorArray
    area: Tuple[float, float, float, float]     # (x_min, x_max, y_min, y_max) [m]
    grid: GridSpec
    fhss: FhssParams = FhssParams()
    channel: ChannelSettings = ChannelSettings()
    snr_db: Optional[float] = 10.0
    sync_bound: float = 0.0                     # alpha [s]
    n_avg: int = 1
    num_trials: int = 500
    algorithms: Tuple[Algorithm, ...] = (Algorithm.ML, Algorithm.LS_BF_GN, Algorithm.LS_BF)
    master_seed: int = 0
    search_window: Optional[float] = None
    search_margin: float = DEFAULT_SEARCH_MARGIN
    gn_tolerance: float = 1e-3
    gn_max_iterations: int = 50
    gn_jacobian: JacobianMode = JacobianMode.ANALYTIC

    def validate(self) -> "Scenario":
        self.fhss.validate()
        x_min, x_max, y_min, y_max = self.area
        if not (x_max > x_min and y_max > y_min):
            raise ScenarioError(f"invalid area {self.area}")
        if self.sensors.dim != 2:
            raise ScenarioError("scenarios are planar, sensors must be 2D")
        if self.n_avg < 1:
            raise ScenarioError(f"n_avg must be >= 1, got {self.n_avg}")
        if self.num_trials < 1:
            raise ScenarioError(f"num_trials must be >= 1, got {self.num_trials}")
        if self.sync_bound < 0:
            raise ScenarioError(f"sync bound must be >= 0, got {self.sync_bound}")
        if not self.algorithms:
            raise ScenarioError("at least one algorithm must be enabled")
        if self.channel.kind is ChannelKind.TRGR and min(self.channel.emitter_height,
                                                         self.channel.sensor_height) <= 0:
            raise ScenarioError("TRGR needs positive antenna heights")
        if self.resolved_search_window() <= 0:
            raise ScenarioError("search window must be > 0")
        return self

    def resolved_search_window(self) -> float:
        if self.search_window is not None:
            return self.search_window
        corners = np.array([[self.area[0], self.area[2]], [self.area[1], self.area[3]]])
        return default_search_window(np.vstack([self.sensors.positions, corners]), self.search_margin)

    def guard_time(self) -> float:
        """Zero padding around each pulse window: search window plus worst-case delays"""
        corners = np.array([[self.area[0], self.area[2]], [self.area[1], self.area[3]]])
        points = np.vstack([self.sensors.positions, corners])
        diagonal = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
        max_propagation = np.hypot(diagonal, self.channel.emitter_height + self.channel.sensor_height) / SPEED_OF_LIGHT
        return (self.resolved_search_window() + max_propagation
                + self.channel.max_excess_delay(self.fhss.sample_rate) + GUARD_MARGIN)

    def describe(self) -> dict:
        """Plain-data view of the scenario in SI units"""
        channel = asdict(self.channel)
        channel["kind"] = self.channel.kind.value
        channel["reflection_coeff"] = [complex(self.channel.reflection_coeff).real,
                                       complex(self.channel.reflection_coeff).imag]
        return {
            "sensors": self.sensors.positions.tolist(),
            "area": list(self.area),
            "grid": {"bounds": list(self.grid.bounds), "resolution": self.grid.resolution},
            "fhss": {**asdict(self.fhss), "hop_band": list(self.fhss.hop_band)},
            "channel": channel,
            "snr_db": self.snr_db,
            "sync_bound": self.sync_bound,
            "n_avg": self.n_avg,
            "num_trials": self.num_trials,
            "algorithms": [a.value for a in self.algorithms],
            "master_seed": self.master_seed,
            "search_window": self.resolved_search_window(),
            "gn_tolerance": self.gn_tolerance,
            "gn_max_iterations": self.gn_max_iterations,
            "gn_jacobian": self.gn_jacobian.value,
        }

    def digest(self) -> str:
        payload = json.dumps(self.describe(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class RoundResult:
    tdoa: TdoaMeasurement
    true_tdoa: np.ndarray
    estimates: Dict[Algorithm, LocationEstimate]


@dataclass(frozen=True, eq=False)
class TrialResult:
    trial_index: int
    truth: np.ndarray
    positions: Dict[Algorithm, np.ndarray]
    rounds: List[RoundResult] = field(repr=False)

    def error(self, algorithm: Algorithm) -> float:
        return float(np.linalg.norm(self.positions[algorithm] - self.truth))


@dataclass(frozen=True, eq=False)
class ErrorCdf:
    algorithm: Algorithm
    errors: np.ndarray             # sorted [m]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        errors = np.sort(np.asarray(self.errors, dtype=float))
        if np.any(errors < 0):
            raise ValueError("localization errors must be >= 0")
        object.__setattr__(self, "errors", errors)

    def percentile(self, p: float) -> float:
        return percentile(self, p)

    def curve(self) -> pd.DataFrame:
        """Empirical CDF points (error_m, probability)"""
        n = self.errors.size
        return pd.DataFrame({
            "algorithm": self.algorithm.value,
            "error_m": self.errors,
            "probability": np.arange(1, n + 1) / n,
        })


@dataclass(frozen=True, eq=False)
class CampaignResult:
    scenario: Scenario
    cdfs: Dict[Algorithm, ErrorCdf]
    records: pd.DataFrame
    failures: List[TrialFailure]


def percentile(cdf: ErrorCdf, p: float) -> float:
    """Linear-interpolated empirical quantile, (k - 1)/(n - 1) convention"""
    if cdf.errors.size == 0:
        raise ValueError("percentile of an empty error distribution")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {p}")
    return float(np.percentile(cdf.errors, p, method="linear"))


def trial_seed(master_seed: int, trial_index: int) -> Tuple[int, int]:
    return (int(master_seed), int(trial_index))


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(trial_seed(master_seed, trial_index))))


def draw_emitter(area: Tuple[float, float, float, float], rng: np.random.Generator) -> np.ndarray:
    x_min, x_max, y_min, y_max = area
    return np.array([rng.uniform(x_min, x_max), rng.uniform(y_min, y_max)])


def _link_geometry(scenario: Scenario, emitter: np.ndarray, sensor: np.ndarray) -> LinkGeometry:
    settings = scenario.channel
    return LinkGeometry(
        emitter_pos=tuple(emitter),
        sensor_pos=tuple(sensor),
        emitter_height=settings.emitter_height,
        sensor_height=settings.sensor_height,
        reflection_coeff=settings.reflection_coeff,
    )


def propagation_delays(scenario: Scenario, emitter: np.ndarray) -> np.ndarray:
    """LOS delay to every sensor, through the antenna heights for TRGR"""
    if scenario.channel.kind is ChannelKind.TRGR:
        lengths = [_link_geometry(scenario, emitter, s).los_length for s in scenario.sensors.positions]
        return np.asarray(lengths) / SPEED_OF_LIGHT
    return np.linalg.norm(scenario.sensors.positions - emitter, axis=1) / SPEED_OF_LIGHT


def draw_channel(scenario: Scenario, emitter: np.ndarray, sensor: np.ndarray,
                 rng: np.random.Generator) -> ChannelRealization:
    settings = scenario.channel
    if settings.kind is ChannelKind.AWGN:
        return awgn_taps(settings.coherence_time)
    if settings.kind is ChannelKind.TRGR:
        return trgr_taps(_link_geometry(scenario, emitter, sensor), coherence_time=settings.coherence_time)
    fs = scenario.fhss.sample_rate
    return draw_wlan_f(fs, settings.rms_delay_spread, settings.taps_at(fs), rng, settings.coherence_time)


def simulate_round(scenario: Scenario, emitter: np.ndarray, rng: np.random.Generator) -> Tuple[TdoaMeasurement, np.ndarray]:
    """
        One TDoA measurement: fresh waveform, one channel realization per sensor
        and coherence block, CAF estimation, then synchronization error

        Returns:
            out (TdoaMeasurement, ndarray): measurement and the true tau_j - tau_1
    """
    fhss = scenario.fhss
    segments, pulses = generate_pulse_segments(fhss, scenario.guard_time(), rng)
    delays = propagation_delays(scenario, emitter)
    blocks = [int(p.start_time // scenario.channel.coherence_time) for p in pulses]

    received = []
    for j, sensor in enumerate(scenario.sensors.positions):
        per_pulse = []
        chan, block = None, None
        for segment, pulse_block in zip(segments, blocks):
            if pulse_block != block:
                chan, block = draw_channel(scenario, emitter, sensor, rng), pulse_block
            per_pulse.append(apply_channel(segment, chan, delays[j], scenario.snr_db, rng,
                                           noise_bandwidth=fhss.noise_bandwidth))
        received.append(per_pulse)

    tdoa = estimate_tdoa_segments(received, pulses, scenario.resolved_search_window(), fhss.hop_passband)
    tdoa = inject_sync_error(tdoa, scenario.sync_bound, rng)
    return tdoa, delays[1:] - delays[0]


def run_trial(scenario: Scenario, trial_index: int) -> TrialResult:
    """
        One Monte Carlo trial: N_avg rounds, every enabled solver per round,
        positions averaged per algorithm

        Raises:
            TrialFailure: estimator or solver failure, tagged with the trial seed
    """
    seed = trial_seed(scenario.master_seed, trial_index)
    rng = trial_rng(scenario.master_seed, trial_index)
    try:
        emitter = draw_emitter(scenario.area, rng)
        rounds = []
        for _ in range(scenario.n_avg):
            tdoa, true_tdoa = simulate_round(scenario, emitter, rng)
            estimates = {
                algorithm: locate(
                    algorithm, scenario.sensors, tdoa, grid=scenario.grid,
                    delta=scenario.gn_tolerance, k_max=scenario.gn_max_iterations,
                    jacobian=scenario.gn_jacobian,
                )
                for algorithm in scenario.algorithms
            }
            rounds.append(RoundResult(tdoa=tdoa, true_tdoa=true_tdoa, estimates=estimates))
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as e:
        raise TrialFailure(trial_index, seed, e) from e

    positions = {
        algorithm: average_estimates([r.estimates[algorithm] for r in rounds], scenario.n_avg)
        for algorithm in scenario.algorithms
    }
    return TrialResult(trial_index=trial_index, truth=emitter, positions=positions, rounds=rounds)


def _run_guarded(scenario: Scenario, trial_index: int):
    try:
        return run_trial(scenario, trial_index)
    except TrialFailure as e:
        logger.warning(str(e))
        return e


def _execute(fn, scenario: Scenario, threads: int, progress: bool, label: str) -> list:
    indices = range(scenario.num_trials)
    if threads <= 1:
        return [fn(scenario, i) for i in tqdm(indices, desc=label, disable=not progress)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        # map keeps trial order whatever the completion order
        return list(tqdm(executor.map(lambda i: fn(scenario, i), indices),
                         total=scenario.num_trials, desc=label, disable=not progress))


def run_campaign(scenario: Scenario, threads: int = 1, progress: bool = False) -> CampaignResult:
    """
        Run num_trials independent trials and aggregate one error CDF per algorithm

        Raises:
            CampaignAbortedError: more than 10% of the trials failed
    """
    scenario.validate()
    logger.info(
        f"Campaign {scenario.digest()[:12]}: {scenario.num_trials} trials, channel {scenario.channel.kind.value}, "
        f"alpha {scenario.sync_bound * 1e9:.1f} ns, N_avg {scenario.n_avg}, threads {threads}"
    )
    outcomes = _execute(_run_guarded, scenario, threads, progress, "trials")

    failures = [o for o in outcomes if isinstance(o, TrialFailure)]
    if len(failures) > ABORT_FAILURE_RATIO * scenario.num_trials:
        raise CampaignAbortedError(
            f"{len(failures)} of {scenario.num_trials} trials failed (limit {ABORT_FAILURE_RATIO:.0%})"
        )

    rows = []
    for trial in outcomes:
        if isinstance(trial, TrialFailure):
            continue
        for algorithm in scenario.algorithms:
            estimate = trial.positions[algorithm]
            rows.append({
                "trial": trial.trial_index,
                "algorithm": algorithm.value,
                "error_m": trial.error(algorithm),
                "truth_x": trial.truth[0],
                "truth_y": trial.truth[1],
                "est_x": estimate[0],
                "est_y": estimate[1],
            })
    records = pd.DataFrame(rows, columns=["trial", "algorithm", "error_m", "truth_x", "truth_y", "est_x", "est_y"])

    metadata = {
        "scenario_digest": scenario.digest(),
        "num_trials": scenario.num_trials,
        "failed_trials": [f.trial_index for f in failures],
    }
    cdfs = {
        algorithm: ErrorCdf(
            algorithm=algorithm,
            errors=records.loc[records["algorithm"] == algorithm.value, "error_m"].to_numpy(),
            metadata=metadata,
        )
        for algorithm in scenario.algorithms
    }
    if len(records):
        for algorithm, cdf in cdfs.items():
            logger.info(f"{algorithm.value}: p90 = {cdf.percentile(90):.3f} m")
    return CampaignResult(scenario=scenario, cdfs=cdfs, records=records, failures=failures)


def run_tdoa_trial(scenario: Scenario, trial_index: int) -> pd.DataFrame:
    """Per-pulse TDoA errors of one round at a random emitter, no solver"""
    rng = trial_rng(scenario.master_seed, trial_index)
    try:
        emitter = draw_emitter(scenario.area, rng)
        tdoa, true_tdoa = simulate_round(scenario, emitter, rng)
    except (ValueError, RuntimeError) as e:
        raise TrialFailure(trial_index, trial_seed(scenario.master_seed, trial_index), e) from e
    return pulse_errors_frame(tdoa, true_tdoa, trial_index)


def _run_tdoa_guarded(scenario: Scenario, trial_index: int):
    try:
        return run_tdoa_trial(scenario, trial_index)
    except TrialFailure as e:
        logger.warning(str(e))
        return e


def run_tdoa_diagnostic(scenario: Scenario, threads: int = 1, progress: bool = False) -> Tuple[pd.DataFrame, List[TrialFailure]]:
    """
        TDoA estimation only over num_trials trials

        Returns:
            out (DataFrame, list): per-pulse errors (trial, sensor_pair, pulse, error_ns) and failures
    """
    scenario.validate()
    outcomes = _execute(_run_tdoa_guarded, scenario, threads, progress, "tdoa trials")
    failures = [o for o in outcomes if isinstance(o, TrialFailure)]
    if len(failures) > ABORT_FAILURE_RATIO * scenario.num_trials:
        raise CampaignAbortedError(
            f"{len(failures)} of {scenario.num_trials} trials failed (limit {ABORT_FAILURE_RATIO:.0%})"
        )
    frames = [o for o in outcomes if isinstance(o, pd.DataFrame)]
    errors = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["trial", "sensor_pair", "pulse", "error_ns"])
    return errors, failures


def error_histogram(errors_ns: Sequence[float], bin_width_ns: float = 1.0) -> pd.DataFrame:
    """Counts of TDoA errors in bins of bin_width_ns, symmetric about zero"""
    errors_ns = np.asarray(errors_ns, dtype=float)
    if errors_ns.size == 0:
        return pd.DataFrame(columns=["bin_low_ns", "bin_high_ns", "count"])
    half = bin_width_ns * np.ceil(np.max(np.abs(errors_ns)) / bin_width_ns + 0.5)
    edges = np.arange(-half, half + bin_width_ns / 2, bin_width_ns)
    counts, edges = np.histogram(errors_ns, bins=edges)
    return pd.DataFrame({"bin_low_ns": edges[:-1], "bin_high_ns": edges[1:], "count": counts})
