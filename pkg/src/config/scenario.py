import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from src.experiments.montecarlo import ChannelSettings, Scenario
from src.localization.locator import Algorithm, GridSpec, JacobianMode, SensorArray
from src.simulation.channel import ChannelKind
from src.simulation.fhss_signal import FhssParams


class ConfigError(ValueError):
    """Raised when a configuration document cannot be read or parsed"""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FhssSection(_Section):
    num_pulses: int = 10
    pulse_period_ms: float = 8.0
    pulse_width_ms: float = 2.0
    hop_band_low_mhz: float = 2400.0
    hop_band_high_mhz: float = 2480.0
    sample_rate_msps: float = 160.0
    symbol_rate_ksps: float = 1000.0
    fsk_deviation_khz: float = 250.0


class ChannelSection(_Section):
    kind: ChannelKind = ChannelKind.TRGR
    snr_db: Optional[float] = 10.0
    emitter_height_m: float = 1.5
    sensor_height_m: float = 2.0
    reflection_coeff_re: float = -1.0
    reflection_coeff_im: float = 0.0
    rms_delay_spread_ns: float = 150.0
    num_taps: Optional[int] = None
    coherence_time_ms: float = 80.0


class ScenarioSection(_Section):
    sensor_positions_m: List[Tuple[float, float]] = [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0), (50.0, 50.0)]
    area_x_m: Tuple[float, float] = (0.0, 50.0)
    area_y_m: Tuple[float, float] = (0.0, 50.0)
    sync_bound_ns: float = 0.0
    n_avg: int = 1
    num_trials: int = 500
    master_seed: int = 2024
    algorithms: List[Algorithm] = [Algorithm.ML, Algorithm.LS_BF_GN, Algorithm.LS_BF]


class EstimatorSection(_Section):
    search_window_ns: Optional[float] = None
    search_margin_ns: float = 500.0


class LocatorSection(_Section):
    grid_resolution_m: float = 0.5
    gn_tolerance_m: float = 1e-3
    gn_max_iterations: int = 50
    gn_jacobian: JacobianMode = JacobianMode.ANALYTIC


class ScenarioConfig(_Section):
    fhss: FhssSection = FhssSection()
    channel: ChannelSection = ChannelSection()
    scenario: ScenarioSection = ScenarioSection()
    estimator: EstimatorSection = EstimatorSection()
    locator: LocatorSection = LocatorSection()

    def to_fhss_params(self) -> FhssParams:
        f = self.fhss
        return FhssParams(
            num_pulses=f.num_pulses,
            pulse_period=f.pulse_period_ms * 1e-3,
            pulse_width=f.pulse_width_ms * 1e-3,
            hop_band=(f.hop_band_low_mhz * 1e6, f.hop_band_high_mhz * 1e6),
            sample_rate=f.sample_rate_msps * 1e6,
            symbol_rate=f.symbol_rate_ksps * 1e3,
            fsk_deviation=f.fsk_deviation_khz * 1e3,
            seed=self.scenario.master_seed,
        )

    def to_scenario(self) -> Scenario:
        """Domain scenario in SI units; invariants are checked by the domain types"""
        ch, sc, est, loc = self.channel, self.scenario, self.estimator, self.locator
        area = (sc.area_x_m[0], sc.area_x_m[1], sc.area_y_m[0], sc.area_y_m[1])
        return Scenario(
            sensors=SensorArray(sc.sensor_positions_m),
            area=area,
            grid=GridSpec(area, loc.grid_resolution_m),
            fhss=self.to_fhss_params(),
            channel=ChannelSettings(
                kind=ch.kind,
                emitter_height=ch.emitter_height_m,
                sensor_height=ch.sensor_height_m,
                reflection_coeff=complex(ch.reflection_coeff_re, ch.reflection_coeff_im),
                rms_delay_spread=ch.rms_delay_spread_ns * 1e-9,
                num_taps=ch.num_taps,
                coherence_time=ch.coherence_time_ms * 1e-3,
            ),
            snr_db=ch.snr_db,
            sync_bound=sc.sync_bound_ns * 1e-9,
            n_avg=sc.n_avg,
            num_trials=sc.num_trials,
            algorithms=tuple(sc.algorithms),
            master_seed=sc.master_seed,
            search_window=None if est.search_window_ns is None else est.search_window_ns * 1e-9,
            search_margin=est.search_margin_ns * 1e-9,
            gn_tolerance=loc.gn_tolerance_m,
            gn_max_iterations=loc.gn_max_iterations,
            gn_jacobian=loc.gn_jacobian,
        ).validate()

    def resolved(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def deep_merge(base: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_document(path: str) -> Dict[str, Any]:
    """
        Read a TOML or JSON config document; a JSON campaign summary yields its config echo
    """
    file = Path(path)
    try:
        text = file.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        if file.suffix.lower() == ".json":
            document = json.loads(text)
            if isinstance(document, dict) and "config" in document and "schema_version" in document:
                document = document["config"]
        else:
            document = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"config {path} must be a table of sections")
    return document


def _parse_literal(raw: str) -> Any:
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(document: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply 'section.key=value' or unique 'key=value' overrides, values as TOML literals"""
    document = json.loads(json.dumps(document))
    sections = ScenarioConfig.model_fields
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override '{override}' is not key=value")
        key, raw = (part.strip() for part in override.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
        else:
            owners = [s for s, f in sections.items() if key in f.annotation.model_fields]
            if len(owners) != 1:
                raise ConfigError(f"override key '{key}' is unknown or ambiguous, use section.key")
            section, name = owners[0], key
        if section not in sections:
            raise ConfigError(f"unknown config section '{section}'")
        document.setdefault(section, {})[name] = _parse_literal(raw)
    return document


def build_config(document: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {e}") from e


def load_config(path: Optional[str] = None, preset: Optional[str] = None,
                overrides: Optional[List[str]] = None) -> ScenarioConfig:
    """Defaults, then a preset, then a config file, then command-line overrides"""
    from src.config.presets import preset_document

    document: Dict[str, Any] = {}
    if preset is not None:
        document = preset_document(preset)
    if path is not None:
        document = deep_merge(document, read_document(path))
    return build_config(apply_overrides(document, overrides or []))
