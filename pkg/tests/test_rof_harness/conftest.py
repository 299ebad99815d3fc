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
Shared fixtures for rof_harness tests.
"""

import os
from textwrap import dedent

import pytest

from rof_core.container import RofContainer

SMALL_SCENARIO = dedent("""\
    name = "small"
    seed = 7
    trials = 4

    [grid]
    center_hz = 140e9
    bandwidth_hz = 1e9
    bins = 16

    [fiber]
    kind = "selective"

    [chain]
    stages = 2
    noise_var = 1e-3
    gain_db = 0.0

    [link]
    amplitude = 1.0
    phase = 0.4
    tau = 3e-9

    [estimator]
    kind = "ml"
    r_range = [0.0, 4.0]
    tau_range = [0.0, 10e-9]

    [sweep]
    axis = "sigma2"
    sigma2 = [1e-3, 1e-2]
""")


@pytest.fixture(autouse=True)
def clean_env():
    """Remove ROF_ env vars before each test and restore them afterwards"""
    original_env = {key: os.environ.pop(key) for key in list(os.environ) if key.startswith("ROF_")}

    yield

    for key in [key for key in os.environ if key.startswith("ROF_")]:
        os.environ.pop(key, None)
    os.environ.update(original_env)


@pytest.fixture
def container():
    """Provide a fresh RofContainer for each test."""
    return RofContainer()


@pytest.fixture
def write_scenario(tmp_path):
    """Write a scenario document into tmp_path and return its path"""

    def write(text: str = SMALL_SCENARIO, name: str = "scenario.toml"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write
