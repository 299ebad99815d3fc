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
rof_harness - scenarios, seeded Monte Carlo runs and the rof-sim command line

Quick Start:
    from rof_harness import load_scenario, run_monte_carlo

    scenario = load_scenario("scenarios/sigma2_selective.toml")
    result = run_monte_carlo(scenario)
    for point in result.points:
        print(point.value, point.rmse, point.error_rate)
"""

from .runner import MonteCarloRunner, RunResult, crlb_sweep, run_monte_carlo, run_trajectory, trial_rng
from .scenario import Scenario, dump_scenario, load_scenario, parse_scenario, scenario_hash

__all__ = [
    "MonteCarloRunner",
    "RunResult",
    "Scenario",
    "crlb_sweep",
    "dump_scenario",
    "load_scenario",
    "parse_scenario",
    "run_monte_carlo",
    "run_trajectory",
    "scenario_hash",
    "trial_rng",
]
