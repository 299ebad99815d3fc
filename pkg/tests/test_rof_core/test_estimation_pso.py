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
Tests for the particle swarm optimiser
"""

import numpy as np
import pytest

from rof_core.estimation import PsoConfig, pso_optimize, swarm_minimize
from rof_core.exceptions import InvalidInputError, OptimizationFailure
from rof_core.settings import PsoSettings

CENTER = np.array([1.2, -0.7])


def quadratic(theta):
    return float(np.sum((np.asarray(theta) - CENTER) ** 2))


class BatchedQuadratic:
    """Same cost as quadratic(), with a whole-swarm entry point"""

    def __call__(self, theta):
        return quadratic(theta)

    def batch(self, positions):
        return np.sum((positions - CENTER) ** 2, axis=-1)


def _config(seed=1, particles=200, iterations=50, dimension=2):
    return PsoConfig(bounds_min=np.full(dimension, -5.0), bounds_max=np.full(dimension, 5.0),
                     particles=particles, iterations=iterations, seed=seed)


class TestPsoConfig:
    """Test suite for PsoConfig validation"""

    def test_bounds_required(self):
        """Bounds cannot be omitted"""
        with pytest.raises(InvalidInputError):
            PsoConfig(bounds_min=None, bounds_max=[1.0])

    def test_inverted_bounds(self):
        """min must be below max in every coordinate"""
        with pytest.raises(InvalidInputError):
            PsoConfig(bounds_min=[0.0, 1.0], bounds_max=[1.0, 1.0])

    def test_infinite_bounds(self):
        """Bounds must be finite"""
        with pytest.raises(InvalidInputError):
            PsoConfig(bounds_min=[0.0], bounds_max=[np.inf])

    def test_from_settings(self):
        """Settings supply the algorithm constants"""
        config = PsoConfig.from_settings(PsoSettings(iterations=3, particles=9), [0.0], [1.0], seed=5)

        assert (config.iterations, config.particles, config.seed) == (3, 9, 5)
        assert config.dimension == 1


class TestSwarmMinimize:
    """Test suite for swarm_minimize"""

    def test_convex_quadratic(self):
        """The swarm finds the minimum of a convex bowl"""
        result = swarm_minimize(quadratic, _config())

        np.testing.assert_allclose(result.theta, CENTER, atol=0.05)
        assert result.cost == pytest.approx(quadratic(result.theta))
        assert result.evaluations == 200 * 51

    def test_deterministic_for_seed(self):
        """The same seed reproduces the same result"""
        first = swarm_minimize(quadratic, _config(seed=9))
        second = swarm_minimize(quadratic, _config(seed=9))

        np.testing.assert_array_equal(first.theta, second.theta)
        assert first.history == second.history

    def test_batch_does_not_change_result(self):
        """A batch evaluator gives the same trajectory as per-particle calls"""
        scalar = swarm_minimize(quadratic, _config(seed=4))
        batched = swarm_minimize(BatchedQuadratic(), _config(seed=4))

        np.testing.assert_array_equal(scalar.theta, batched.theta)

    def test_best_cost_never_increases(self):
        """The global best cost is monotone and never worse than the initial best"""
        result = swarm_minimize(quadratic, _config(particles=20, iterations=30))

        assert all(b <= a for a, b in zip(result.history, result.history[1:]))
        assert result.cost <= result.history[0]

    def test_stays_in_bounds(self):
        """The minimum outside the box is approached from its boundary"""
        config = PsoConfig(bounds_min=[2.0, -5.0], bounds_max=[5.0, 5.0], particles=100, iterations=40, seed=2)

        result = swarm_minimize(quadratic, config)

        assert 2.0 <= result.theta[0] <= 5.0
        assert result.theta[0] == pytest.approx(2.0, abs=0.05)

    def test_non_finite_cost(self):
        """A NaN cost aborts with the offending theta"""

        def broken(theta):
            return float("nan") if theta[0] > 0 else quadratic(theta)

        with pytest.raises(OptimizationFailure) as excinfo:
            swarm_minimize(broken, _config(particles=10, iterations=5))

        assert excinfo.value.theta[0] > 0

    def test_pso_optimize_needs_four_parameters(self):
        """pso_optimize searches [|A|, phi, tau, r]"""
        with pytest.raises(InvalidInputError):
            pso_optimize(quadratic, _config(dimension=3))

    def test_pso_optimize_estimate(self):
        """The swarm minimum is reported as a ParamEstimate"""
        center = np.array([0.8, 0.5, 3.0, 2.2])
        config = PsoConfig(bounds_min=[0.0, -np.pi, 0.0, 0.0], bounds_max=[2.0, np.pi, 5.0, 5.0],
                           particles=300, iterations=60, seed=3)

        estimate = pso_optimize(lambda t: float(np.sum((np.asarray(t) - center) ** 2)), config)

        assert estimate.amplitude == pytest.approx(0.8, abs=0.05)
        assert estimate.phase == pytest.approx(0.5, abs=0.05)
        assert estimate.r_hat_rounded == 2
        assert len(estimate.diagnostics["history"]) == 61
