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
Tests for the Monte Carlo runner
"""

import math
from textwrap import dedent

import numpy as np
import pytest

from rof_core.event_types import RUN_COMPLETED, SWEEP_POINT_COMPLETED, TRIAL_COMPLETED, TRIAL_FAILED
from rof_core.exceptions import DegenerateNoiseError, RunAbortedError
from rof_core.rof_signal import NONLIN_MILD, NONLIN_STRONG
from rof_harness import runner
from rof_harness.reporting import register_reporting
from rof_harness.runner import (
    CRLB_COLUMNS,
    RESULT_COLUMNS,
    TRIAL_COLUMNS,
    MonteCarloRunner,
    aggregate,
    crlb_sweep,
    run_monte_carlo,
    scenario_pilot,
    trial_rng,
    wrap_phase,
)
from rof_harness.scenario import parse_scenario

from .conftest import SMALL_SCENARIO


@pytest.fixture
def scenario():
    return parse_scenario(SMALL_SCENARIO)


def _estimates(result):
    return [(r.point, r.trial, r.estimate.amplitude, r.estimate.phase, r.estimate.tau_hat, r.estimate.r_hat)
            for r in result.records]


def _fail_first_trial(original):
    def simulate(setup, trial, container):
        if trial == 0:
            raise DegenerateNoiseError("zero variance")
        return original(setup, trial, container)
    return simulate


class TestRandomStreams:
    """Test suite for seeding"""

    def test_trial_rng_is_reproducible(self):
        """The same (seed, point, trial) gives the same stream"""
        assert trial_rng(7, 1, 2).normal() == trial_rng(7, 1, 2).normal()

    def test_trial_rng_streams_differ(self):
        """Neighbouring trials and points draw different numbers"""
        draws = {trial_rng(7, i, j).normal() for i in range(3) for j in range(3)}

        assert len(draws) == 9

    def test_pilot_depends_on_seed_only(self, scenario):
        """The pilot is shared by every point of a run"""
        first = scenario_pilot(scenario).symbols
        again = scenario_pilot(scenario.at("sigma2", 0.5)).symbols
        other = scenario_pilot(scenario.model_copy(update={"seed": 8})).symbols

        np.testing.assert_array_equal(first, again)
        assert not np.array_equal(first, other)

    def test_wrap_phase(self):
        """Phase errors fold into [-pi, pi)"""
        np.testing.assert_allclose(wrap_phase([0.1, 2 * np.pi + 0.1, -np.pi - 0.1]), [0.1, 0.1, np.pi - 0.1])


class TestMonteCarlo:
    """Test suite for sweeps"""

    def test_result_shape(self, scenario, container):
        """One point per sweep value and one record per trial"""
        result = run_monte_carlo(scenario, container, workers=2)

        assert result.axis == "sigma2"
        assert [p.value for p in result.points] == [1e-3, 1e-2]
        assert len(result.records) == 2 * scenario.trials
        assert all(r.ok for r in result.records)
        assert len(result.points[0].as_row()) == len(RESULT_COLUMNS)
        assert len(result.records[0].as_row()) == len(TRIAL_COLUMNS)

    def test_worker_count_does_not_change_results(self, scenario):
        """Every trial owns its stream, so the pool size is invisible"""
        single = run_monte_carlo(scenario, workers=1)
        pooled = run_monte_carlo(scenario, workers=3)

        assert _estimates(single) == _estimates(pooled)
        assert [p.as_row() for p in single.points] == [p.as_row() for p in pooled.points]

    def test_same_seed_same_result(self, scenario):
        """Two runs with one seed agree exactly"""
        assert _estimates(run_monte_carlo(scenario)) == _estimates(run_monte_carlo(scenario))

    def test_aggregate_matches_records(self, scenario):
        """Point RMSE is recomputed from the per-trial errors"""
        result = run_monte_carlo(scenario)
        records = [r for r in result.records if r.point == 1]

        errors = np.array([r.errors() for r in records])
        np.testing.assert_allclose(result.points[1].rmse, np.sqrt(np.mean(errors ** 2, axis=0)))
        assert result.points[1].error_rate == np.mean([r.r_error for r in records])

    def test_noiseless_on_grid_truth_is_recovered(self, scenario):
        """With sigma2 = 0 the estimator sees the noise floor and finds the exact cell"""
        noiseless = scenario.model_copy(update={"sweep": scenario.sweep.model_copy(update={"sigma2": [0.0]})})

        result = run_monte_carlo(noiseless)

        point = result.points[0]
        assert point.failures == 0
        assert point.error_rate == 0.0
        assert point.rmse[0] < 1e-9
        assert point.rmse[1] < 1e-9
        assert point.rmse[2] < 1e-18
        assert point.rmse[3] < 1e-12
        # no CRLB without noise
        assert point.crlb is None
        assert all(math.isnan(v) for v in point.as_row()[-4:])

    def test_crlb_attached_to_points(self, scenario):
        """Each noisy point carries its selective-regime bound"""
        result = run_monte_carlo(scenario)

        assert result.points[0].crlb is not None
        assert result.points[0].crlb.variances[2] < result.points[1].crlb.variances[2]

    def test_sweep_override(self, scenario):
        """An axis override sweeps a single default value"""
        text = SMALL_SCENARIO.replace('axis = "sigma2"', 'axis = "sigma2"\namplitude = [0.5, 1.0]')

        result = run_monte_carlo(parse_scenario(text), axis="amplitude")

        assert result.axis == "amplitude"
        assert [p.value for p in result.points] == [0.5, 1.0]
        assert {r.a_true for r in result.records if r.point == 0} == {0.5}


class TestFailures:
    """Test suite for failed trials"""

    def test_aggregate_skips_failed_trials(self, scenario, container):
        """Failed trials count as failures and stay out of the RMSE"""
        mc = MonteCarloRunner(container, scenario)
        setup = mc.point_setup(0, 1e-3, scenario_pilot(scenario))
        records = [mc._trial(setup, trial) for trial in range(3)]
        records[1].estimate = None
        records[1].error = {"error": "DegenerateNoiseError", "message": "zero variance"}

        point = aggregate(1e-3, records)

        errors = np.array([records[0].errors(), records[2].errors()])
        assert point.failures == 1
        np.testing.assert_allclose(point.rmse, np.sqrt(np.mean(errors ** 2, axis=0)))
        assert records[1].as_row()[3] == "failed"
        assert records[1].as_row()[-1] == "DegenerateNoiseError: zero variance"

    def test_all_failed(self):
        """A point without a successful trial has NaN aggregates"""
        point = aggregate(1.0, [])

        assert np.isnan(point.rmse).all()
        assert math.isnan(point.error_rate)

    def test_too_many_failures_abort(self, scenario, container, monkeypatch):
        """More than 10 % failed trials at a point aborts the run"""
        monkeypatch.setattr(runner, "simulate_trial", _fail_first_trial(runner.simulate_trial))
        failures = []
        register_reporting(container, failures)

        with pytest.raises(RunAbortedError):
            run_monte_carlo(scenario, container)

        assert len(failures) == 1
        assert failures[0]["error"] == "DegenerateNoiseError"
        assert failures[0]["subject"] == "small/point-0"
        assert failures[0]["trial"] == 0

    def test_few_failures_are_tolerated(self, scenario, container, monkeypatch):
        """One failure in 20 trials stays under the abort threshold"""
        monkeypatch.setattr(runner, "simulate_trial", _fail_first_trial(runner.simulate_trial))

        result = run_monte_carlo(scenario.model_copy(update={"trials": 20}), container)

        assert [p.failures for p in result.points] == [1, 1]
        assert not result.records[0].ok


class TestEvents:
    """Test suite for runner events"""

    @pytest.mark.asyncio
    async def test_events(self, scenario, container):
        """Trials, points and the run each announce themselves"""
        on, when, middleware, emit = container.handlers()
        seen = []

        @on(TRIAL_COMPLETED)
        async def trial_done(ctx):
            seen.append((ctx.event_type, ctx.subject))

        @on("sweep-*")
        async def point_done(ctx):
            seen.append((ctx.event_type, ctx.payload["value"], ctx.get_metadata("wall_time") >= 0))

        @on(RUN_COMPLETED)
        async def run_done(ctx):
            seen.append((ctx.event_type, ctx.payload["points"]))

        result = await MonteCarloRunner(container, scenario, workers=2).run()

        assert seen.count((TRIAL_COMPLETED, "small/point-0")) == scenario.trials
        assert seen.count((TRIAL_COMPLETED, "small/point-1")) == scenario.trials
        assert (SWEEP_POINT_COMPLETED, 1e-3, True) in seen
        assert (SWEEP_POINT_COMPLETED, 1e-2, True) in seen
        assert seen[-1] == (RUN_COMPLETED, 2)
        assert len(result.points) == 2

    @pytest.mark.asyncio
    async def test_failure_event(self, scenario, container, monkeypatch):
        """A failed trial emits trial-failed with the dumped error"""
        monkeypatch.setattr(runner, "simulate_trial", _fail_first_trial(runner.simulate_trial))
        on, when, middleware, emit = container.handlers()
        failed = []

        @on(TRIAL_FAILED)
        async def trial_failed(ctx):
            failed.append(ctx.payload)

        with pytest.raises(RunAbortedError):
            await MonteCarloRunner(container, scenario).run()

        assert failed == [{"trial": 0, "value": 1e-3, "error": "DegenerateNoiseError", "message": "zero variance"}]


class TestCrlbSweep:
    """Test suite for CRLB tables"""

    def test_rows(self, scenario):
        """Both regimes are reported for every sweep value"""
        rows = crlb_sweep(scenario)

        assert [(row[0], row[1]) for row in rows] == [
            (1e-3, "flat"), (1e-3, "selective"), (1e-2, "flat"), (1e-2, "selective")]
        assert all(len(row) == len(CRLB_COLUMNS) for row in rows)

    def test_flat_stage_bound(self, scenario):
        """The flat stage bound is (r + 1)^2 / K whatever the noise"""
        rows = [row for row in crlb_sweep(scenario) if row[1] == "flat"]

        for row in rows:
            assert row[5] == pytest.approx(9 / 16, rel=1e-6)

    def test_selective_beats_flat(self, scenario):
        """A frequency-selective fiber carries stage information in its noise"""
        rows = crlb_sweep(scenario)

        for flat, selective in zip(rows[::2], rows[1::2]):
            assert selective[5] < flat[5]

    def test_zero_noise_is_skipped(self, scenario, caplog):
        """A zero noise variance has no bound"""
        point = scenario.model_copy(update={"sweep": scenario.sweep.model_copy(update={"sigma2": [0.0, 1e-3]})})

        rows = crlb_sweep(point)

        assert [row[0] for row in rows] == [1e-3, 1e-3]
        assert "positive noise variance" in caplog.text


ERROR_RATE_SCENARIO = dedent("""\
    name = "error-rate"
    seed = 5
    trials = 1000

    [grid]
    center_hz = 0.5e9
    bandwidth_hz = 1e9
    bins = 16

    [fiber]
    kind = "selective"

    [chain]
    stages = 3
    noise_var = 1e-5
    nonlin = {nonlin}
    oversample = 2

    [link]
    amplitude = 0.6
    phase = 0.2
    tau = 3e-9

    [estimator]
    kind = "pso"
    r_range = [0.0, 5.0]
    tau_range = [2.5e-9, 3.5e-9]
    particles = 200
    iterations = 50

    [sweep]
    axis = "amplitude"
    amplitude = [0.02, 0.1, 0.6]
""")


def _band(p, q, n):
    """Half width of a 95% band on the difference of two binomial rates"""
    return 1.96 * math.sqrt((p * (1 - p) + q * (1 - q)) / n)


@pytest.mark.slow
class TestErrorRateTrend:
    """Stage-count error rate of the swarm estimator against |A| and PA nonlinearity"""

    @pytest.fixture(scope="class")
    def rates(self):
        rates = {}
        for nonlin in (NONLIN_MILD, NONLIN_STRONG):
            result = run_monte_carlo(parse_scenario(ERROR_RATE_SCENARIO.format(nonlin=nonlin)), workers=4)
            rates[nonlin] = ([p.error_rate for p in result.points], [p.trials - p.failures for p in result.points])
        return rates

    @pytest.mark.parametrize("nonlin", [NONLIN_MILD, NONLIN_STRONG])
    def test_falls_with_amplitude(self, rates, nonlin):
        """The error rate does not rise with |A| beyond binomial spread"""
        values, counts = rates[nonlin]

        for i in range(len(values) - 1):
            assert values[i + 1] <= values[i] + _band(values[i], values[i + 1], min(counts[i], counts[i + 1]))

    def test_stronger_nonlinearity_is_not_easier(self, rates):
        """At every |A| the strong PA errs at least as often as the mild one, up to spread"""
        mild, mild_counts = rates[NONLIN_MILD]
        strong, strong_counts = rates[NONLIN_STRONG]

        for p, q, n, m in zip(mild, strong, mild_counts, strong_counts):
            assert q >= p - _band(p, q, min(n, m))

    @pytest.mark.parametrize("nonlin", [NONLIN_MILD, NONLIN_STRONG])
    def test_rare_at_largest_amplitude(self, rates, nonlin):
        """At the largest |A| at most one block in a hundred gets r wrong"""
        assert rates[nonlin][0][-1] <= 1e-2
