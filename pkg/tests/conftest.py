import os
import tempfile

# must be set before any src module creates its logger
os.environ.setdefault("TDOA_LOG_DIR", tempfile.mkdtemp(prefix="tdoa-test-logs-"))

import numpy as np
import pytest

from src.experiments.montecarlo import ChannelSettings, Scenario
from src.localization.locator import GridSpec, SensorArray
from src.simulation.channel import ChannelKind
from src.simulation.fhss_signal import FhssParams

AREA = (0.0, 50.0, 0.0, 50.0)
CORNERS = [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0), (50.0, 50.0)]

SMALL_TOML = """
[fhss]
num_pulses = 4
pulse_period_ms = 0.2
pulse_width_ms = 0.1
hop_band_low_mhz = 2438.0
hop_band_high_mhz = 2442.0
sample_rate_msps = 20.0

[channel]
kind = "AWGN"
snr_db = 30.0

[scenario]
num_trials = 4
master_seed = 5
"""


@pytest.fixture
def small_fhss():
    return FhssParams(
        num_pulses=4,
        pulse_period=200e-6,
        pulse_width=100e-6,
        hop_band=(2438e6, 2442e6),
        sample_rate=20e6,
        seed=7,
    )


@pytest.fixture
def sensors():
    return SensorArray(CORNERS)


@pytest.fixture
def grid():
    return GridSpec(AREA, 0.5)


@pytest.fixture
def make_scenario(small_fhss, sensors, grid):
    def _make(**overrides):
        fields = dict(
            sensors=sensors,
            area=AREA,
            grid=grid,
            fhss=small_fhss,
            channel=ChannelSettings(kind=ChannelKind.AWGN),
            snr_db=None,
            num_trials=6,
            master_seed=11,
        )
        fields.update(overrides)
        return Scenario(**fields)
    return _make


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_TOML, encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
