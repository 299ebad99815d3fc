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

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from rof_core.exceptions import InvalidInputError
from rof_core.fiber_channel import FrequencyGrid, UnitFiberResponse
from rof_core.rof_signal import PilotSequence


def round_stages(r: float) -> int:
    """Nearest non-negative integer, halves rounded up"""
    return max(0, int(math.floor(r + 0.5)))


def _axis(lo: float, hi: float, step: float, name: str) -> np.ndarray:
    if not lo < hi:
        raise InvalidInputError(f"{name} range must satisfy min < max, got [{lo}, {hi}]")
    if not step > 0:
        raise InvalidInputError(f"{name} step must be positive, got {step}")
    count = int(math.floor((hi - lo) / step * (1 + 1e-12))) + 1
    if count < 2:
        raise InvalidInputError(f"{name} axis needs at least 2 points")
    return lo + step * np.arange(count)


@dataclass(frozen=True)
class SearchGrid2D:
    """(r, tau) grid for the ML search; both axes include their lower bound"""
    r_min: float
    r_max: float
    r_step: float
    tau_min: float
    tau_max: float
    tau_step: float

    def __post_init__(self):
        _axis(self.r_min, self.r_max, self.r_step, "r")
        _axis(self.tau_min, self.tau_max, self.tau_step, "tau")

    @property
    def r_values(self) -> np.ndarray:
        return _axis(self.r_min, self.r_max, self.r_step, "r")

    @property
    def tau_values(self) -> np.ndarray:
        return _axis(self.tau_min, self.tau_max, self.tau_step, "tau")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.r_values.size, self.tau_values.size

    @classmethod
    def default_for(cls, grid: FrequencyGrid, r_range: Tuple[float, float],
                    tau_range: Tuple[float, float]) -> "SearchGrid2D":
        """Delta tau = 1/(8 B), Delta r = 0.1"""
        return cls(
            r_min=r_range[0], r_max=r_range[1], r_step=0.1,
            tau_min=tau_range[0], tau_max=tau_range[1], tau_step=1 / (8 * grid.bandwidth),
        )


@dataclass(frozen=True, eq=False)
class PsoConfig:
    """
    Particle swarm parameters.

    Attributes:
        bounds_min, bounds_max: box per parameter, order [|A|, phi, tau, r]
        seed: seed of the swarm's own Generator
    """
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    iterations: int = 100
    particles: int = 1000
    w_personal: float = 1.0
    w_global: float = 0.7
    inertia: float = 0.3
    inertia_decay: float = 0.7
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.bounds_min is None or self.bounds_max is None:
            raise InvalidInputError("PSO needs bounds for every parameter")
        lo = np.asarray(self.bounds_min, dtype=float)
        hi = np.asarray(self.bounds_max, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise InvalidInputError("PSO bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("PSO bounds must be finite")
        if np.any(lo >= hi):
            raise InvalidInputError("PSO bounds must satisfy min < max elementwise")
        if self.iterations < 1 or self.particles < 1:
            raise InvalidInputError("PSO needs at least one iteration and one particle")
        if not 0 < self.inertia_decay <= 1:
            raise InvalidInputError(f"inertia decay must be within (0, 1], got {self.inertia_decay}")
        object.__setattr__(self, "bounds_min", lo)
        object.__setattr__(self, "bounds_max", hi)

    @property
    def dimension(self) -> int:
        return self.bounds_min.size

    @classmethod
    def from_settings(cls, pso_settings, bounds_min: Sequence[float], bounds_max: Sequence[float],
                      seed: Optional[int] = 0) -> "PsoConfig":
        return cls(
            bounds_min=bounds_min,
            bounds_max=bounds_max,
            iterations=pso_settings.iterations,
            particles=pso_settings.particles,
            w_personal=pso_settings.w_personal,
            w_global=pso_settings.w_global,
            inertia=pso_settings.inertia,
            inertia_decay=pso_settings.inertia_decay,
            seed=seed,
        )


@dataclass
class ParamEstimate:
    """
    Estimated link and chain parameters.

    Attributes:
        a_hat: complex wireless coefficient |A| e^{j phi}
        tau_hat: delay in seconds
        r_hat: continuous stage estimate
        r_hat_rounded: nearest integer to r_hat, for error-rate metrics
        objective: final cost
        evaluations: number of objective evaluations
    """
    a_hat: complex
    tau_hat: float
    r_hat: float
    objective: float
    evaluations: int
    r_hat_rounded: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.objective):
            raise InvalidInputError(f"estimate objective must be finite, got {self.objective}")
        if self.r_hat_rounded is None:
            self.r_hat_rounded = round_stages(self.r_hat)

    @property
    def amplitude(self) -> float:
        return float(abs(self.a_hat))

    @property
    def phase(self) -> float:
        return float(np.angle(self.a_hat))


@dataclass(frozen=True)
class LinearModel:
    """Known inputs of the linear-regime estimators"""
    pilot: PilotSequence
    fiber: UnitFiberResponse
    gain: float

    def __post_init__(self):
        if len(self.pilot) != self.fiber.grid.size:
            raise InvalidInputError("pilot and fiber grid lengths differ")
        if not self.gain > 0:
            raise InvalidInputError(f"gain must be positive, got {self.gain}")

    @property
    def grid(self) -> FrequencyGrid:
        return self.fiber.grid
