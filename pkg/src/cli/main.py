"""
Command-line front end: run localization campaigns, TDoA diagnostics and
accuracy bounds from a scenario config, a preset and overrides.

    python -m src.cli.main run --preset fig2_alpha0 --output-dir results/fig2_alpha0
    python -m src.cli.main tdoa-diag --preset fig4 --output-dir results/fig4
    python -m src.cli.main crlb --preset fig2_alpha0
    python -m src.cli.main presets-list
"""
import argparse
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.constants import c as SPEED_OF_LIGHT

from src.config.presets import PRESETS, preset_names
from src.config.scenario import ConfigError, ScenarioConfig, load_config
from src.config.settings import AppConfig
from src.estimation.tdoa_estimator import crlb_single_pulse, rms_bandwidth
from src.experiments.montecarlo import (
    CampaignAbortedError,
    CampaignResult,
    ScenarioError,
    error_histogram,
    run_campaign,
    run_tdoa_diagnostic,
)
from src.localization.locator import DegenerateGeometryError
from src.simulation.channel import ChannelError
from src.simulation.fhss_signal import FhssParamsError, generate_pulse_segments
from src.storage.results_writer import ResultsWriter
from src.utils.logger import Logger

logger = Logger(name="cli", component="cli").get_logger()

SCHEMA_VERSION = 1
SUMMARY_PERCENTILES = (50, 90, 95)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SCENARIO = 3
EXIT_ABORTED = 4


def _build_parser(app_config: AppConfig) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.cli.main",
        description="FHSS TDoA localization simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--config", help="TOML/JSON scenario config, or a previous summary.json")
        p.add_argument("--preset", choices=preset_names(), help="named preset applied before --config")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="section.key=value (repeatable), value as a TOML literal")

    def campaign_args(p):
        scenario_args(p)
        p.add_argument("--output-dir", default=app_config.output_dir, help="directory for result files")
        p.add_argument("--threads", type=int, default=app_config.threads, help="worker threads")
        p.add_argument("--progress", action="store_true", help="show a progress bar on stderr")

    campaign_args(commands.add_parser("run", help="localization campaign: errors, CDFs and percentiles"))
    campaign_args(commands.add_parser("tdoa-diag", help="per-pulse TDoA errors, no localization"))

    crlb = commands.add_parser(
        "crlb", help="single-pulse TDoA accuracy bound over an SNR grid",
        epilog="B_s is measured in the hop band of a generated pulse when neither --bs-hz nor --bs-rad is given",
    )
    scenario_args(crlb)
    crlb.add_argument("--snr-min-db", type=float, default=-10.0)
    crlb.add_argument("--snr-max-db", type=float, default=30.0)
    crlb.add_argument("--snr-step-db", type=float, default=5.0)
    bandwidth = crlb.add_mutually_exclusive_group()
    bandwidth.add_argument("--bs-hz", type=float, default=None,
                           help="RMS signal bandwidth B_s in Hz, converted to rad/s as 2 pi B_s")
    bandwidth.add_argument("--bs-rad", type=float, default=None,
                           help="RMS signal bandwidth B_s in rad/s")

    commands.add_parser("presets-list", help="list the named presets")
    return parser


def _load(args) -> ScenarioConfig:
    config = load_config(path=args.config, preset=args.preset, overrides=args.override)
    logger.info(f"Loaded config (preset={args.preset}, file={args.config}, {len(args.override)} overrides)")
    return config


def _summary(config: ScenarioConfig, result: CampaignResult) -> dict:
    algorithms = {}
    for algorithm, cdf in result.cdfs.items():
        algorithms[algorithm.value] = {
            **{f"p{p}_m": cdf.percentile(p) for p in SUMMARY_PERCENTILES},
            "num_errors": int(cdf.errors.size),
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.resolved(),
        "scenario_digest": result.scenario.digest(),
        "num_trials": result.scenario.num_trials,
        "failures": {
            "count": len(result.failures),
            "trials": [{"trial": f.trial_index, "seed": list(f.seed), "error": str(f.cause)}
                       for f in result.failures],
        },
        "algorithms": algorithms,
    }


def cmd_run(args) -> int:
    """
        Function running a localization campaign and writing errors.csv,
        cdf.csv and summary.json, then printing the p90 table

        Returns:
            out (int): exit status
    """
    config = _load(args)
    scenario = config.to_scenario()
    result = run_campaign(scenario, threads=args.threads, progress=args.progress)

    cdf_table = pd.concat([cdf.curve() for cdf in result.cdfs.values()], ignore_index=True)
    summary = _summary(config, result)
    with ResultsWriter(args.output_dir) as writer:
        writer.write_csv("errors.csv", result.records)
        writer.write_csv("cdf.csv", cdf_table)
        writer.write_json("summary.json", summary)

    table = pd.DataFrame(
        [(name, stats["p90_m"]) for name, stats in summary["algorithms"].items()],
        columns=["algorithm", "p90_m"],
    )
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    return EXIT_OK


def cmd_tdoa_diag(args) -> int:
    """
        Function running TDoA estimation only and writing tdoa_errors.csv,
        tdoa_histogram.csv and tdoa_summary.json
    """
    config = _load(args)
    scenario = config.to_scenario()
    errors, failures = run_tdoa_diagnostic(scenario, threads=args.threads, progress=args.progress)

    pairs = errors.groupby("sensor_pair")["error_ns"] if len(errors) else {}
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": config.resolved(),
        "scenario_digest": scenario.digest(),
        "num_trials": scenario.num_trials,
        "failures": {"count": len(failures), "trials": [f.trial_index for f in failures]},
        "sensor_pairs": {
            pair: {"mean_ns": float(values.mean()), "std_ns": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
                   "max_abs_ns": float(values.abs().max()), "num_errors": int(len(values))}
            for pair, values in pairs
        },
    }
    with ResultsWriter(args.output_dir) as writer:
        writer.write_csv("tdoa_errors.csv", errors)
        writer.write_csv("tdoa_histogram.csv", error_histogram(errors["error_ns"].to_numpy()))
        writer.write_json("tdoa_summary.json", summary)

    for pair, stats in summary["sensor_pairs"].items():
        print(f"{pair}: std {stats['std_ns']:.3f} ns, max |error| {stats['max_abs_ns']:.3f} ns")
    return EXIT_OK


def cmd_crlb(args) -> int:
    """Single-pulse sigma_t = 1 / (B_s sqrt(B_n Tp gamma)) for equal SNR at both sensors"""
    config = _load(args)
    fhss = config.to_fhss_params().validate()
    if args.snr_step_db <= 0 or args.snr_max_db < args.snr_min_db:
        raise ConfigError("SNR grid needs snr_step_db > 0 and snr_max_db >= snr_min_db")

    bs = args.bs_rad
    if args.bs_hz is not None:
        bs = 2.0 * np.pi * args.bs_hz
    if bs is None:
        segments, pulses = generate_pulse_segments(fhss, 0.0, np.random.default_rng(fhss.seed))
        bs = rms_bandwidth(segments[0], pulses[0], fhss.hop_passband)
    logger.info(f"B_s = {bs:.4g} rad/s, B_n = {fhss.noise_bandwidth:.4g} Hz, Tp = {fhss.pulse_width:.4g} s")

    snr_db = np.arange(args.snr_min_db, args.snr_max_db + args.snr_step_db / 2, args.snr_step_db)
    sigma = np.array([crlb_single_pulse(bs, fhss.noise_bandwidth, fhss.pulse_width, g, g)
                      for g in 10.0 ** (snr_db / 10.0)])
    table = pd.DataFrame({
        "snr_db": snr_db,
        "sigma_t_ns": sigma * 1e9,
        "sigma_r_m": sigma * SPEED_OF_LIGHT,
        f"sigma_t_{fhss.num_pulses}_pulses_ns": sigma / np.sqrt(fhss.num_pulses) * 1e9,
    })
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
    return EXIT_OK


def cmd_presets_list(args) -> int:
    for name in preset_names():
        print(f"{name:14s} {PRESETS[name]['description']}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "tdoa-diag": cmd_tdoa_diag,
    "crlb": cmd_crlb,
    "presets-list": cmd_presets_list,
}


def main(argv: Optional[List[str]] = None) -> int:
    app_config = AppConfig()
    args = _build_parser(app_config).parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, FhssParamsError, ChannelError, DegenerateGeometryError) as e:
        logger.error(f"Scenario error: {e}")
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except CampaignAbortedError as e:
        logger.error(f"Campaign aborted: {e}")
        print(f"campaign aborted: {e}", file=sys.stderr)
        return EXIT_ABORTED
    except Exception as e:
        logger.exception(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
