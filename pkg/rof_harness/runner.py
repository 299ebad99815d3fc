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
Seeded Monte Carlo execution.

Every trial owns a Generator derived from (seed, sweep index, trial index), so
results do not depend on the worker count or on completion order. Trials run
in a thread pool; aggregation always walks them in (point, trial) order.
"""

import asyncio
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rof_core.container import RofContainer
from rof_core.crlb import CrlbResult, crlb
from rof_core.estimation import (
    LinearModel,
    NlsModel,
    ParamEstimate,
    SearchGrid2D,
    estimate_nonlinear,
    ml_grid_search,
    nls_bounds,
    round_stages,
)
from rof_core.event_bus import EventBus
from rof_core.event_types import (
    RUN_COMPLETED,
    SWEEP_POINT_COMPLETED,
    TRAJECTORY_POINT_COMPLETED,
    TRIAL_COMPLETED,
    TRIAL_FAILED,
)
from rof_core.exceptions import RofError, RunAbortedError
from rof_core.exceptions_dumpers import ExceptionsDumpers
from rof_core.fiber_channel import FrequencyGrid, SyntheticFiberSpec, UnitFiberResponse, synth_fiber
from rof_core.positioning import PositionRecord, TrajectoryResult, UePosition, locate_once
from rof_core.rof_signal import (
    ChainParams,
    PilotSequence,
    WirelessLink,
    pathloss_amplitude,
    propagate_linear,
    propagate_nonlinear,
    qpsk_pilot,
    time_domain_input,
    wireless_input,
)
from rof_harness.scenario import Scenario, scenario_hash

logger = logging.getLogger(__name__)

# a run aborts when more than this share of a point's trials fail
MAX_FAILURE_RATE = 0.10

# noise variance handed to the ML objective for noiseless data
ESTIMATOR_SIGMA2_FLOOR = 1e-12

RESULT_COLUMNS = [
    "value", "trials", "failures",
    "rmse_amplitude", "rmse_phase", "rmse_tau", "rmse_r", "error_rate",
    "crlb_amplitude", "crlb_phase", "crlb_tau", "crlb_r",
]
TRIAL_COLUMNS = [
    "point", "value", "trial", "status",
    "a_true", "a_hat", "phase_true", "phase_hat", "tau_true", "tau_hat",
    "r_true", "r_hat", "r_hat_rounded", "error",
]
CRLB_COLUMNS = [
    "value", "regime", "var_amplitude", "var_phase", "var_tau", "var_r", "condition_number", "pseudo_inverse",
]
POSITION_COLUMNS = ["point", "trial", "px_true", "py_true", "px_hat", "py_hat", "err_m"]


def trial_rng(seed: int, sweep_index: int, trial_index: int) -> np.random.Generator:
    """Independent stream per (seed, sweep point, trial)"""
    return np.random.default_rng(np.random.SeedSequence([seed, sweep_index, trial_index]))


def scenario_pilot(scenario: Scenario) -> PilotSequence:
    """The run's known pilot, fixed by the master seed alone"""
    return qpsk_pilot(scenario.grid.bins, np.random.default_rng(np.random.SeedSequence(scenario.seed)))


def wrap_phase(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


@dataclass
class TrialRecord:
    point: int
    value: float
    trial: int
    a_true: float
    phase_true: float
    tau_true: float
    r_true: float
    estimate: Optional[ParamEstimate] = None
    error: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.estimate is not None

    @property
    def r_error(self) -> bool:
        return self.ok and self.estimate.r_hat_rounded != round_stages(self.r_true)

    def errors(self) -> np.ndarray:
        """Signed errors of (|A|, phi, tau, r)"""
        est = self.estimate
        return np.array([
            est.amplitude - self.a_true,
            float(wrap_phase(est.phase - self.phase_true)),
            est.tau_hat - self.tau_true,
            est.r_hat - self.r_true,
        ])

    def as_row(self) -> list:
        est = self.estimate
        common = [self.point, self.value, self.trial, "ok" if self.ok else "failed",
                  self.a_true, None if est is None else est.amplitude,
                  self.phase_true, None if est is None else est.phase,
                  self.tau_true, None if est is None else est.tau_hat,
                  self.r_true, None if est is None else est.r_hat,
                  None if est is None else est.r_hat_rounded]
        message = "" if self.ok else f"{self.error.get('error', '')}: {self.error.get('message', '')}"
        return common + [message]


@dataclass
class PointResult:
    """Aggregates over one sweep value; rmse is (|A|, phi, tau, r)"""
    value: float
    trials: int
    failures: int
    rmse: np.ndarray
    error_rate: float
    crlb: Optional[CrlbResult] = None
    wall_time: float = 0.0

    def as_row(self) -> list:
        variances = [math.nan] * 4 if self.crlb is None else list(self.crlb.variances)
        return [self.value, self.trials, self.failures, *self.rmse, self.error_rate, *variances]


@dataclass
class RunResult:
    scenario: str
    scenario_hash: str
    seed: int
    axis: str
    points: List[PointResult] = field(default_factory=list)
    records: List[TrialRecord] = field(default_factory=list)

    @property
    def wall_time(self) -> float:
        return sum(p.wall_time for p in self.points)


def aggregate(value: float, records: Sequence[TrialRecord], bound: Optional[CrlbResult] = None,
              wall_time: float = 0.0) -> PointResult:
    """RMSE and P(round(r_hat) != r) over the successful trials, in record order"""
    done = [r for r in records if r.ok]
    if done:
        errors = np.array([r.errors() for r in done])
        rmse = np.sqrt(np.mean(errors ** 2, axis=0))
        error_rate = float(np.mean([r.r_error for r in done]))
    else:
        rmse, error_rate = np.full(4, math.nan), math.nan
    return PointResult(
        value=value,
        trials=len(records),
        failures=len(records) - len(done),
        rmse=rmse,
        error_rate=error_rate,
        crlb=bound,
        wall_time=wall_time,
    )


@dataclass(frozen=True)
class PointSetup:
    """Model inputs shared by every trial of one sweep point"""
    index: int
    value: float
    scenario: Scenario
    pilot: PilotSequence
    unit: UnitFiberResponse
    chain: ChainParams
    oversample: int
    pso_overrides: dict

    @property
    def grid(self) -> FrequencyGrid:
        return self.unit.grid


def received_block(setup: PointSetup, link: WirelessLink, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Spectrum (ML) or oversampled time block (PSO) at the CU"""
    x = wireless_input(link, setup.pilot, setup.grid)
    if setup.scenario.estimator.kind == "ml":
        return propagate_linear(x, setup.chain, rng)
    return propagate_nonlinear(time_domain_input(x, setup.grid, setup.oversample), setup.chain, rng)


def estimate_block(setup: PointSetup, y, container: RofContainer, rng: np.random.Generator) -> ParamEstimate:
    """
    Run the scenario's estimator on one received block.

    The PSO seed is the next draw from ``rng``.
    """
    scenario = setup.scenario
    est = scenario.estimator
    y = np.asarray(y, dtype=complex)
    if est.kind == "ml":
        search = SearchGrid2D(
            r_min=est.r_range[0], r_max=est.r_range[1], r_step=est.r_step,
            tau_min=est.tau_range[0], tau_max=est.tau_range[1],
            tau_step=est.tau_step or 1 / (8 * setup.grid.bandwidth),
        )
        model = LinearModel(pilot=setup.pilot, fiber=setup.unit, gain=setup.chain.pa.gain)
        return ml_grid_search(
            y, search, scenario.regime, model,
            max(setup.chain.noise_var, ESTIMATOR_SIGMA2_FLOOR),
            log_term=est.flat_log_term,
        )
    bounds_min, bounds_max = nls_bounds(
        est.amplitude_max or 4 * scenario.link.amplitude,
        est.tau_range,
        est.r_range[1],
    )
    config = container.pso_config(
        bounds_min=bounds_min,
        bounds_max=bounds_max,
        seed=int(rng.integers(0, 2 ** 63)),
    )
    if setup.pso_overrides:
        config = replace(config, **setup.pso_overrides)
    return estimate_nonlinear(y, config, NlsModel(pilot=setup.pilot, chain=setup.chain, oversample=setup.oversample))


def simulate_trial(setup: PointSetup, trial: int, container: RofContainer) -> Tuple[ParamEstimate, WirelessLink]:
    """
    One simulate-then-estimate cycle; returns the estimate and the true link.

    Stream order: |A| shadowing (with [pathloss]), receiver noise, PSO seed.
    """
    rng = trial_rng(setup.scenario.seed, setup.index, trial)
    link = _trial_link(setup, rng)
    y = received_block(setup, link, rng)
    return estimate_block(setup, y, container, rng), link


def _trial_link(setup: PointSetup, rng: np.random.Generator) -> WirelessLink:
    scenario = setup.scenario
    pathloss = scenario.pathloss_params()
    if pathloss is not None and scenario.link.distance is not None:
        return scenario.link_params(pathloss_amplitude(pathloss, scenario.link.distance, rng))
    return scenario.link_params()


def point_crlb(setup: PointSetup, singular_condition: float) -> Optional[CrlbResult]:
    """CRLB at the point's truth, for the linear regime with noise only"""
    scenario = setup.scenario
    if setup.chain.noise_var <= 0 or not setup.chain.pa.is_linear:
        return None
    link = scenario.link_params()
    model = LinearModel(pilot=setup.pilot, fiber=setup.unit, gain=setup.chain.pa.gain)
    theta = [link.amplitude, link.phase, link.tau, setup.chain.stages]
    try:
        return crlb(theta, model, setup.chain.noise_var, scenario.regime, singular_condition)
    except RofError as e:
        logger.warning(f"No CRLB at {scenario.name} value {setup.value}: {e}")
        return None


class MonteCarloRunner:
    """
    Runs a scenario's sweep with trials spread over a thread pool.

    Events (subject "<scenario>/point-<i>"):
        trial-completed, trial-failed: payload carries the trial index and the
            estimate or the dumped error
        sweep-point-completed: payload is the PointResult row keyed by column
        run-completed: payload carries the point count and the scenario hash

    Example:
        container = RofContainer()
        runner = MonteCarloRunner(container, scenario, workers=4)
        result = asyncio.run(runner.run())
    """

    def __init__(self, container: RofContainer, scenario: Scenario, workers: Optional[int] = None,
                 axis: Optional[str] = None):
        self.container = container
        self.scenario = scenario
        self.settings = container.settings()
        self.workers = workers or scenario.workers or self.settings.workers
        self.axis = scenario.sweep_axis(axis)
        self.event_bus: EventBus = container.event_bus()
        self.dumpers: ExceptionsDumpers = container.exceptions_dumpers()

    def point_setup(self, index: int, value: float, pilot: PilotSequence) -> PointSetup:
        scenario = self.scenario.at(self.axis, value)
        unit = scenario.unit_fiber()
        return PointSetup(
            index=index,
            value=value,
            scenario=scenario,
            pilot=pilot,
            unit=unit,
            chain=scenario.chain_params(unit),
            oversample=scenario.chain.oversample or self.settings.oversample,
            pso_overrides=scenario.estimator.pso_overrides(),
        )

    def _trial(self, setup: PointSetup, trial: int) -> TrialRecord:
        link = setup.scenario.link_params()
        record = TrialRecord(
            point=setup.index,
            value=setup.value,
            trial=trial,
            a_true=link.amplitude,
            phase_true=link.phase,
            tau_true=link.tau,
            r_true=float(setup.chain.stages),
        )
        try:
            estimate, truth = simulate_trial(setup, trial, self.container)
        except RofError as e:
            logger.debug(f"Trial {trial} at point {setup.index} failed: {e}")
            record.error = self.dumpers.dump(e)
            return record
        record.a_true = truth.amplitude
        record.estimate = estimate
        return record

    async def _run_trial(self, loop, pool, setup: PointSetup, trial: int) -> TrialRecord:
        record = await loop.run_in_executor(pool, self._trial, setup, trial)
        subject = f"{self.scenario.name}/point-{setup.index}"
        if record.ok:
            await self.event_bus.emit(TRIAL_COMPLETED, subject, {
                "trial": trial,
                "value": setup.value,
                "tau_hat": record.estimate.tau_hat,
                "r_hat": record.estimate.r_hat,
            })
        else:
            await self.event_bus.emit(TRIAL_FAILED, subject, {"trial": trial, "value": setup.value, **record.error})
        return record

    async def run(self) -> RunResult:
        scenario = self.scenario
        values = scenario.sweep_values(self.axis)
        digest = scenario_hash(scenario)
        pilot = scenario_pilot(scenario)
        result = RunResult(scenario=scenario.name, scenario_hash=digest, seed=scenario.seed, axis=self.axis)
        logger.info(f"Running '{scenario.name}': {len(values)} {self.axis} points x {scenario.trials} trials, "
                    f"{self.workers} workers")
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for index, value in enumerate(values):
                started = time.perf_counter()
                setup = self.point_setup(index, value, pilot)
                records = await asyncio.gather(*[
                    self._run_trial(loop, pool, setup, trial) for trial in range(scenario.trials)
                ])
                bound = point_crlb(setup, self.settings.singular_condition)
                point = aggregate(value, records, bound, wall_time=time.perf_counter() - started)
                result.points.append(point)
                result.records.extend(records)
                subject = f"{scenario.name}/point-{index}"
                await self.event_bus.emit(SWEEP_POINT_COMPLETED, subject, dict(zip(RESULT_COLUMNS, point.as_row())),
                                          wall_time=point.wall_time)
                if point.failures > MAX_FAILURE_RATE * point.trials:
                    raise RunAbortedError(
                        f"{point.failures} of {point.trials} trials failed at {self.axis}={value}"
                    )
        await self.event_bus.emit(RUN_COMPLETED, scenario.name, {
            "points": len(result.points),
            "scenario_hash": digest,
        }, wall_time=result.wall_time)
        return result


def run_monte_carlo(scenario: Scenario, container: Optional[RofContainer] = None, workers: Optional[int] = None,
                    axis: Optional[str] = None) -> RunResult:
    """Synchronous entry point around MonteCarloRunner.run()"""
    container = container or RofContainer()
    return asyncio.run(MonteCarloRunner(container, scenario, workers=workers, axis=axis).run())


def crlb_sweep(scenario: Scenario, axis: Optional[str] = None,
               singular_condition: Optional[float] = None) -> List[list]:
    """
    CRLB rows (value, regime, variances, condition number, pseudo-inverse flag).

    Both regimes are evaluated on equal-energy fibers: the scenario's own
    selective (or measured) response and a flat one with the same total energy.
    """
    axis = scenario.sweep_axis(axis)
    if singular_condition is None:
        singular_condition = RofContainer().settings().singular_condition
    pilot = PilotSequence(symbols=np.ones(scenario.grid.bins, dtype=complex))
    rows = []
    for value in scenario.sweep_values(axis):
        point = scenario.at(axis, value)
        if point.chain.noise_var <= 0:
            logger.warning(f"Skipping {axis}={value}: the CRLB needs a positive noise variance")
            continue
        grid = point.frequency_grid()
        selective = point.unit_fiber(grid) if point.fiber.kind != "flat" else synth_fiber(
            point.synthetic_fiber("selective"), grid)
        flat = synth_fiber(SyntheticFiberSpec(
            kind="flat",
            total_energy=selective.energy,
            delay_samples=point.fiber.delay_samples,
        ), grid)
        link = point.link_params()
        theta = [link.amplitude, link.phase, link.tau, point.chain.stages]
        for regime, unit in (("flat", flat), ("selective", selective)):
            # flat formulas hold at the compensation point G |H| = 1
            gain = point.gain(unit) if regime == "selective" else float(1 / np.max(unit.magnitude))
            model = LinearModel(pilot=pilot, fiber=unit, gain=gain)
            try:
                bound = crlb(theta, model, point.chain.noise_var, regime, singular_condition)
            except RofError as e:
                logger.warning(f"No {regime} CRLB at {axis}={value}: {e}")
                continue
            rows.append([value, regime, *bound.variances, bound.condition_number, int(bound.pseudo_inverse_used)])
    return rows


class TrajectoryRunner:
    """
    Monte Carlo positioning along a trajectory, one thread-pool task per
    (point, trial) with a trial_rng stream each.
    """

    def __init__(self, container: RofContainer, scenario: Scenario, workers: Optional[int] = None):
        self.scenario = scenario
        self.setup = scenario.trajectory_setup()
        self.workers = workers or scenario.workers or container.settings().workers
        self.event_bus: EventBus = container.event_bus()

    async def run(self, trajectory: Sequence[UePosition]) -> TrajectoryResult:
        scenario, setup = self.scenario, self.setup
        unit = setup.unit()
        pilot = scenario_pilot(scenario)
        result = TrajectoryResult()
        loop = asyncio.get_running_loop()

        def locate(i: int, j: int) -> PositionRecord:
            ue = trajectory[i]
            px, py = locate_once(ue, setup, pilot, unit, trial_rng(scenario.seed, i, j))
            return PositionRecord(point=i, trial=j, px_true=ue.px, py_true=ue.py, px_hat=px, py_hat=py)

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for i in range(len(trajectory)):
                records = await asyncio.gather(*[
                    loop.run_in_executor(pool, locate, i, j) for j in range(setup.trials)
                ])
                result.records.extend(records)
                await self.event_bus.emit(TRAJECTORY_POINT_COMPLETED, f"{scenario.name}/point-{i}", {
                    "point": i,
                    "rmse": result.point_rmse(i),
                    "trials": setup.trials,
                })
        await self.event_bus.emit(RUN_COMPLETED, scenario.name, {
            "points": len(trajectory),
            "rmse": result.rmse,
            "scenario_hash": scenario_hash(scenario),
        })
        return result


def run_trajectory(scenario: Scenario, trajectory: Sequence[UePosition], container: Optional[RofContainer] = None,
                   workers: Optional[int] = None) -> TrajectoryResult:
    container = container or RofContainer()
    return asyncio.run(TrajectoryRunner(container, scenario, workers=workers).run(trajectory))
