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
Nonlinear least squares for the cubic-PA regime.

theta = [|A|, phi, tau, r]; r is rounded to the nearest non-negative integer
before the time-domain cascade is evaluated.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from rof_core.estimation.models import ParamEstimate, PsoConfig, round_stages
from rof_core.estimation.pso import pso_optimize
from rof_core.exceptions import InvalidInputError
from rof_core.rof_signal import (
    ChainParams,
    PilotSequence,
    apply_cascade,
    oversampled_chain,
    pa_apply,
    time_domain_input,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NlsModel:
    """Known inputs of the nonlinear estimator; chain.stages is ignored"""
    pilot: PilotSequence
    chain: ChainParams
    oversample: int = 4

    def __post_init__(self):
        if len(self.pilot) != self.chain.grid.size:
            raise InvalidInputError("pilot and fiber grid lengths differ")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise InvalidInputError(f"oversampling factor must be a positive integer, got {self.oversample}")


def nls_bounds(amplitude_max: float, tau_range: Tuple[float, float], r_max: float):
    """Default box: |A| in [0, amplitude_max], phi in [-pi, pi], tau in tau_range, r in [0, r_max]"""
    return (
        np.array([0.0, -np.pi, tau_range[0], 0.0]),
        np.array([amplitude_max, np.pi, tau_range[1], r_max]),
    )


class NlsProblem:
    """
    ||y - f^r(pa(x(theta)))||^2 for one received block.

    Calling the instance evaluates one theta; ``batch`` evaluates a swarm,
    grouping particles that share the rounded r.
    """

    def __init__(self, model: NlsModel, y_time):
        self.model = model
        self.y_time = np.asarray(y_time, dtype=complex)
        grid = model.chain.grid
        expected = grid.size * model.oversample
        if self.y_time.shape != (expected,):
            raise InvalidInputError(f"received block has shape {self.y_time.shape}, expected ({expected},)")
        self._freqs = grid.freqs
        self._stage = oversampled_chain(model.chain, expected)

    def mean(self, thetas) -> np.ndarray:
        """Noiseless received blocks, one row per theta"""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        amplitude, phase, tau = thetas[:, 0:1], thetas[:, 1:2], thetas[:, 2:3]
        spectra = (amplitude * np.exp(1j * phase)
                   * np.exp(-2j * np.pi * tau * self._freqs) * self.model.pilot.symbols)
        y0 = pa_apply(time_domain_input(spectra, self.model.chain.grid, self.model.oversample),
                      self.model.chain.pa)
        stages = np.array([round_stages(r) for r in thetas[:, 3]])
        out = np.empty_like(y0)
        for r in np.unique(stages):
            rows = stages == r
            out[rows] = y0[rows] if r == 0 else apply_cascade(y0[rows], self._stage, int(r))
        return out

    def batch(self, thetas) -> np.ndarray:
        return np.sum(np.abs(self.y_time - self.mean(thetas)) ** 2, axis=-1)

    def __call__(self, theta) -> float:
        return float(self.batch(theta)[0])


def nls_objective(theta, y_time, model: NlsModel) -> float:
    """Squared error between y_time and the noiseless cascade output at theta"""
    return NlsProblem(model, y_time)(theta)


def estimate_nonlinear(y_time, config: PsoConfig, model: NlsModel) -> ParamEstimate:
    estimate = pso_optimize(NlsProblem(model, y_time), config)
    logger.debug(f"NLS estimate r={estimate.r_hat:.3f} ({estimate.r_hat_rounded}) tau={estimate.tau_hat:.4e}")
    return estimate

