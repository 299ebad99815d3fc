# Copyright 2025 The ROF Positioning Authors
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
rof-sim command line.

Subcommands:
    simulate        Monte Carlo sweep, one row per sweep value
    estimate        estimate from an input block, or from one simulated block
    crlb            CRLB table for both fiber regimes over a sweep
    position        Monte Carlo positioning along a trajectory
    ingest-channel  smooth a measurement and export the unit channel

ROF_LOG sets the console log level. Exit status is 0 on success, 2 on invalid
input, 1 on any other failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from rof_core.container import RofContainer
from rof_core.exceptions import InvalidInputError, RofError
from rof_core.fiber_channel import (
    FrequencyGrid,
    build_unit_response,
    read_measurement,
    smooth_measurement,
    write_channel,
)
from rof_core.positioning import read_trajectory
from rof_harness.io import attach_sidecar_log, read_spectrum, sidecar_path, write_spectrum, write_table
from rof_harness.reporting import register_reporting
from rof_harness.runner import (
    CRLB_COLUMNS,
    POSITION_COLUMNS,
    RESULT_COLUMNS,
    TRIAL_COLUMNS,
    MonteCarloRunner,
    crlb_sweep,
    estimate_block,
    received_block,
    run_monte_carlo,
    run_trajectory,
    scenario_pilot,
    trial_rng,
)
from rof_harness.scenario import Scenario, load_scenario, scenario_hash

logger = logging.getLogger("rof_harness")

ESTIMATE_COLUMNS = ["amplitude", "phase", "tau", "r", "r_rounded", "objective", "evaluations"]


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 63:
        raise argparse.ArgumentTypeError(f"seed must be within [0, 2^63), got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rof-sim", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, sweep=True, workers=True):
        p.add_argument("--scenario", required=True, type=Path, help="scenario TOML document")
        p.add_argument("--out", required=True, type=Path, help="output CSV")
        p.add_argument("--seed", type=_seed, help="override the scenario's master seed")
        if workers:
            p.add_argument("--workers", type=_positive_int, help="worker threads (default: scenario, then ROF_WORKERS)")
        if sweep:
            p.add_argument("--sweep", choices=["sigma2", "amplitude", "bandwidth"], help="sweep axis")

    simulate = sub.add_parser("simulate", help="Monte Carlo RMSE / error-rate sweep")
    scenario_args(simulate)
    simulate.add_argument("--dump-trials", action="store_true", help="also write <out>.trials.csv")

    estimate = sub.add_parser("estimate", help="single-block estimate")
    scenario_args(estimate, sweep=False, workers=False)
    estimate.add_argument("--input", type=Path, help="received block as a 're, im' CSV")

    crlb = sub.add_parser("crlb", help="CRLB sweep for flat and selective fibers")
    scenario_args(crlb, workers=False)

    position = sub.add_parser("position", help="trajectory positioning experiment")
    scenario_args(position, sweep=False)
    position.add_argument("--trajectory", type=Path, help="'px_m, py_m' CSV (default: [positioning] trajectory)")

    ingest = sub.add_parser("ingest-channel", help="smooth a measurement and export the unit channel")
    ingest.add_argument("--measurement", required=True, type=Path, help="'freq_hz, magnitude_db, group_delay_s' CSV")
    ingest.add_argument("--out", required=True, type=Path, help="channel CSV with phase_rad")
    ingest.add_argument("--window", type=_positive_int, default=300, help="median window (default 300)")
    ingest.add_argument("--scenario", type=Path, help="take the output grid from this scenario")
    return parser


def _scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.model_copy(update={"seed": args.seed})
    return scenario


def _header(scenario: Scenario, command: str, **extra) -> dict:
    return {
        "command": command,
        "scenario": scenario.name,
        "scenario_hash": scenario_hash(scenario),
        "seed": scenario.seed,
        **extra,
    }


def cmd_simulate(args, container: RofContainer) -> int:
    scenario = _scenario(args)
    result = run_monte_carlo(scenario, container, workers=args.workers, axis=args.sweep)
    header = _header(scenario, "simulate", axis=result.axis, trials=scenario.trials)
    write_table(args.out, header, RESULT_COLUMNS, [p.as_row() for p in result.points])
    if args.dump_trials:
        write_table(sidecar_path(args.out, ".trials.csv"), header, TRIAL_COLUMNS,
                    [r.as_row() for r in result.records])
    logger.info(f"simulate finished in {result.wall_time:.2f} s")
    return 0


def cmd_estimate(args, container: RofContainer) -> int:
    scenario = _scenario(args)
    runner = MonteCarloRunner(container, scenario)
    setup = runner.point_setup(0, scenario.sweep_values()[0], scenario_pilot(scenario))
    rng = trial_rng(scenario.seed, 0, 0)
    if args.input is not None:
        y = read_spectrum(args.input)
        source = str(args.input)
    else:
        y = received_block(setup, scenario.link_params(), rng)
        source = "simulated"
        write_spectrum(sidecar_path(args.out, ".input.csv"), y, _header(scenario, "estimate"))
    expected = setup.grid.size * (1 if scenario.estimator.kind == "ml" else setup.oversample)
    if y.size != expected:
        raise InvalidInputError(f"{source}: {y.size} samples, the scenario expects {expected}")
    estimate = estimate_block(setup, y, container, rng)
    row = [estimate.amplitude, estimate.phase, estimate.tau_hat, estimate.r_hat,
           estimate.r_hat_rounded, estimate.objective, estimate.evaluations]
    write_table(args.out, _header(scenario, "estimate", input=source), ESTIMATE_COLUMNS, [row])
    return 0


def cmd_crlb(args, container: RofContainer) -> int:
    scenario = _scenario(args)
    axis = scenario.sweep_axis(args.sweep)
    rows = crlb_sweep(scenario, axis, container.settings().singular_condition)
    write_table(args.out, _header(scenario, "crlb", axis=axis), CRLB_COLUMNS, rows)
    return 0


def cmd_position(args, container: RofContainer) -> int:
    scenario = _scenario(args)
    setup = scenario.trajectory_setup()
    path = args.trajectory or scenario.positioning.trajectory
    if path is None:
        raise InvalidInputError("no trajectory: pass --trajectory or set positioning.trajectory")
    trajectory = read_trajectory(path, setup.geometry)
    result = run_trajectory(scenario, trajectory, container, workers=args.workers)
    rows = [[r.point, r.trial, r.px_true, r.py_true, r.px_hat, r.py_hat, r.err_m] for r in result.records]
    write_table(args.out, _header(scenario, "position", trials=scenario.trials), POSITION_COLUMNS, rows)
    logger.info(f"position RMSE {result.rmse:.4f} m")
    return 0


def _measurement_grid(freqs: np.ndarray) -> FrequencyGrid:
    # uniform grid with the measurement's point count and end frequencies
    k = freqs.size
    bandwidth = (freqs[-1] - freqs[0]) * k / (k - 1)
    return FrequencyGrid.centered(freqs[0] + bandwidth / 2, bandwidth, k)


def cmd_ingest_channel(args, container: RofContainer) -> int:
    raw = read_measurement(args.measurement)
    meas = smooth_measurement(raw, min(args.window, raw.freqs.size))
    grid = load_scenario(args.scenario).frequency_grid() if args.scenario else _measurement_grid(meas.freqs)
    unit = build_unit_response(meas, grid)
    write_channel(args.out, unit)
    logger.info(f"Exported {grid.size}-bin channel with {unit.taps.size} taps to {args.out}")
    return 0


def _report_error(container: RofContainer, error: Exception):
    # scenario errors carry their key or TOML position
    details = container.exceptions_dumpers().dump(error)
    logger.error(", ".join(f"{key}={value}" for key, value in details.items()))
    print(f"rof-sim: error: {error}", file=sys.stderr)


def _console_logging(level: int) -> logging.Handler:
    # the root logger passes INFO on to the sidecar log whatever the console level
    console = logging.StreamHandler()
    console.setLevel(level)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(console)
    root.setLevel(min(level, logging.INFO))
    return console


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "crlb": cmd_crlb,
    "position": cmd_position,
    "ingest-channel": cmd_ingest_channel,
}


def main(argv: Optional[List[str]] = None, container: Optional[RofContainer] = None) -> int:
    args = build_parser().parse_args(argv)
    container = container or RofContainer()
    try:
        settings = container.settings()
    except ValidationError as e:
        print(f"rof-sim: error: invalid environment settings: {e}", file=sys.stderr)
        return 2
    root = logging.getLogger()
    previous_level = root.level
    console = _console_logging(settings.log_level)
    stop_reporting = register_reporting(container)
    sidecar = attach_sidecar_log(args.out) if args.out.parent.is_dir() else None
    try:
        return COMMANDS[args.command](args, container)
    except InvalidInputError as e:
        _report_error(container, e)
        return 2
    except (RofError, OSError) as e:
        _report_error(container, e)
        return 1
    finally:
        stop_reporting()
        for handler in (console, sidecar):
            if handler is not None:
                root.removeHandler(handler)
                handler.close()
        root.setLevel(previous_level)


if __name__ == "__main__":
    sys.exit(main())
