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
rof_core - simulation, estimation and bounds for cascaded radio-over-fiber uplinks

Modules:
    fiber_channel: unit fiber responses, cascades, measurement ingestion
    rof_signal: pilot, wireless link, linear and cubic PA propagation
    estimation: ML grid search and PSO nonlinear least squares
    crlb: Fisher information and Cramer-Rao bounds
    positioning: three-RoF indoor positioning

Quick Start:
    import numpy as np
    from rof_core.fiber_channel import FrequencyGrid, SyntheticFiberSpec, synth_fiber
    from rof_core.rof_signal import ChainParams, PaParams, WirelessLink, qpsk_pilot, wireless_input, propagate_linear
    from rof_core.estimation import LinearModel, SearchGrid2D, ml_grid_search

    rng = np.random.default_rng(1)
    grid = FrequencyGrid.centered(140e9, 1e9, 64)
    fiber = synth_fiber(SyntheticFiberSpec(kind="selective", total_energy=64), grid)
    pilot = qpsk_pilot(64, rng)
    chain = ChainParams(stages=3, noise_var=1e-3, pa=PaParams(gain=1.0), fiber=fiber)
    link = WirelessLink(amplitude=1.0, phase=0.3, tau=12e-9)
    y = propagate_linear(wireless_input(link, pilot, grid), chain, rng)
    search = SearchGrid2D.default_for(grid, (0, 5), (0, 40e-9))
    estimate = ml_grid_search(y, search, "selective", LinearModel(pilot, fiber, 1.0), 1e-3)
"""

from .container import RofContainer
from .event_bus import EventBus, EventContext
from .exceptions import RofError
from .settings import RofSettings

__version__ = "0.1.0"

__all__ = [
    "RofContainer",
    "EventBus",
    "EventContext",
    "RofError",
    "RofSettings",
]
