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
Shared fixtures for rof_core tests.
"""

import os

import numpy as np
import pytest

from rof_core.fiber_channel import FrequencyGrid, SyntheticFiberSpec, synth_fiber
from rof_core.rof_signal import qpsk_pilot


@pytest.fixture(autouse=True)
def clean_env():
    """Remove ROF_ env vars before each test and restore them afterwards"""
    original_env = {key: os.environ.pop(key) for key in list(os.environ) if key.startswith("ROF_")}

    yield

    for key in [key for key in os.environ if key.startswith("ROF_")]:
        os.environ.pop(key, None)
    os.environ.update(original_env)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid():
    """64 bins of 1 GHz around 140 GHz"""
    return FrequencyGrid.centered(140e9, 1e9, 64)


@pytest.fixture
def selective_fiber(grid):
    """Raised-cosine fiber with E = K, so b_k = |H_k|^2 spreads around 1 at G = 1"""
    return synth_fiber(SyntheticFiberSpec(kind="selective", total_energy=grid.size), grid)


@pytest.fixture
def flat_fiber(grid):
    """Gain-compensated flat fiber, |H_k| = 1"""
    return synth_fiber(SyntheticFiberSpec(kind="flat", total_energy=grid.size), grid)


@pytest.fixture
def pilot(grid, rng):
    return qpsk_pilot(grid.size, rng)
