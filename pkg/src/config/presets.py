from typing import Any, Dict

from src.config.scenario import ConfigError

# Each preset overrides the defaults of ScenarioConfig, which already encode
# the common setup: 50 m x 50 m area, four corner sensors, N = 10 pulses,
# T0 = 8 ms, Tp = 2 ms, 2400-2480 MHz hops, 160 MSPS, 10 dB SNR, 500 trials.
PRESETS: Dict[str, Dict[str, Any]] = {
    "fig2_alpha0": {
        "description": "TRGR, alpha = 0 ns, N_avg = 1",
        "config": {"channel": {"kind": "TRGR"}, "scenario": {"sync_bound_ns": 0.0, "n_avg": 1}},
    },
    "fig2_alpha10": {
        "description": "TRGR, alpha = 10 ns, N_avg = 1",
        "config": {"channel": {"kind": "TRGR"}, "scenario": {"sync_bound_ns": 10.0, "n_avg": 1}},
    },
    "fig2_alpha20": {
        "description": "TRGR, alpha = 20 ns, N_avg = 1",
        "config": {"channel": {"kind": "TRGR"}, "scenario": {"sync_bound_ns": 20.0, "n_avg": 1}},
    },
    "fig3": {
        "description": "TRGR, alpha = 20 ns, N_avg = 20",
        "config": {"channel": {"kind": "TRGR"}, "scenario": {"sync_bound_ns": 20.0, "n_avg": 20}},
    },
    "fig3_navg1": {
        "description": "TRGR, alpha = 20 ns, N_avg = 1 (baseline curve of fig3)",
        "config": {"channel": {"kind": "TRGR"}, "scenario": {"sync_bound_ns": 20.0, "n_avg": 1}},
    },
    "fig4": {
        "description": "TRGR per-pulse TDoA errors, alpha = 0 ns",
        "config": {"channel": {"kind": "TRGR"}, "scenario": {"sync_bound_ns": 0.0, "n_avg": 1}},
    },
    "fig5": {
        "description": "WLAN channel F, alpha = 0 ns, N_avg = 20",
        "config": {"channel": {"kind": "WLAN_F"}, "scenario": {"sync_bound_ns": 0.0, "n_avg": 20}},
    },
    "fig5_navg1": {
        "description": "WLAN channel F, alpha = 0 ns, N_avg = 1 (baseline curve of fig5)",
        "config": {"channel": {"kind": "WLAN_F"}, "scenario": {"sync_bound_ns": 0.0, "n_avg": 1}},
    },
    "fig6": {
        "description": "WLAN channel F per-pulse TDoA errors, alpha = 0 ns",
        "config": {"channel": {"kind": "WLAN_F"}, "scenario": {"sync_bound_ns": 0.0, "n_avg": 1}},
    },
    "awgn_sanity": {
        "description": "AWGN, 30 dB SNR, alpha = 0 ns: near-noiseless pipeline check",
        "config": {"channel": {"kind": "AWGN", "snr_db": 30.0}, "scenario": {"sync_bound_ns": 0.0}},
    },
}


def preset_names():
    return sorted(PRESETS)


def preset_document(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}', choose from {', '.join(preset_names())}")
    return PRESETS[name]["config"]
