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
Tests for the linear-regime maximum-likelihood estimator
"""

import numpy as np
import pytest

from rof_core.crlb import crlb
from rof_core.estimation import (
    LinearModel,
    SearchGrid2D,
    a_hat,
    g_vector,
    ml_grid_search,
    ml_objective_flat,
    ml_objective_selective,
    prewhiten,
    round_stages,
)
from rof_core.exceptions import DegenerateModelError, DegenerateNoiseError, InvalidInputError
from rof_core.fiber_channel import FrequencyGrid, SyntheticFiberSpec, b_factors, synth_fiber
from rof_core.rof_signal import (
    ChainParams,
    PaParams,
    WirelessLink,
    complex_gaussian,
    effective_noise_variance,
    propagate_linear,
    qpsk_pilot,
    wireless_input,
)


@pytest.fixture
def selective_model(pilot, selective_fiber):
    return LinearModel(pilot=pilot, fiber=selective_fiber, gain=1.0)


@pytest.fixture
def flat_model(pilot, flat_fiber):
    return LinearModel(pilot=pilot, fiber=flat_fiber, gain=1.0)


class TestModels:
    """Test suite for estimator data types"""

    @pytest.mark.parametrize("r, expected", [(0.2, 0), (2.5, 3), (3.49, 3), (-0.7, 0), (4.5, 5)])
    def test_round_stages(self, r, expected):
        """Nearest non-negative integer, halves rounded up"""
        assert round_stages(r) == expected

    def test_search_grid_axes(self, grid):
        """Both axes start at their lower bound and include the upper one"""
        search = SearchGrid2D.default_for(grid, (0, 5), (0, 40e-9))

        assert search.r_values.size == 51
        assert search.r_values[-1] == pytest.approx(5.0)
        assert search.tau_step == pytest.approx(0.125e-9)
        assert search.tau_values.size == 321
        assert search.shape == (51, 321)

    def test_search_grid_rejects_empty_range(self):
        """min must be below max"""
        with pytest.raises(InvalidInputError):
            SearchGrid2D(r_min=2, r_max=2, r_step=0.1, tau_min=0, tau_max=1e-9, tau_step=1e-10)

    def test_linear_model_lengths(self, selective_fiber, rng):
        """Pilot and grid must agree"""
        with pytest.raises(InvalidInputError):
            LinearModel(pilot=qpsk_pilot(8, rng), fiber=selective_fiber, gain=1.0)


class TestProjection:
    """Test suite for the regressor and amplitude estimate"""

    def test_g_vector(self, selective_model, grid, pilot):
        """r = 0, tau = 0 leaves G s"""
        np.testing.assert_allclose(g_vector(0, 0, pilot, selective_model.fiber, 1.5), 1.5 * pilot.symbols)

    def test_a_hat_recovers_scale(self, selective_model, pilot):
        """y = 2.5 g gives A = 2.5"""
        g = g_vector(2, 3e-9, pilot, selective_model.fiber, 1.0)

        assert a_hat(2.5 * g, g) == pytest.approx(2.5)

    def test_a_hat_orthogonal(self):
        """y orthogonal to g gives A = 0"""
        assert a_hat(np.array([1.0, -1.0]), np.array([1.0, 1.0])) == 0

    def test_a_hat_zero_regressor(self):
        """A zero g is degenerate"""
        with pytest.raises(DegenerateModelError):
            a_hat(np.ones(3), np.zeros(3))

    def test_pythagorean_residual(self, flat_model, grid, rng):
        """Residual = ||y||^2 - |g^H y|^2 / ||g||^2"""
        y = complex_gaussian(rng, 1.0, grid.size)
        g = g_vector(1.7, 4e-9, flat_model.pilot, flat_model.fiber, 1.0)
        sigma2 = 0.5

        value = ml_objective_flat(y, 1.7, 4e-9, flat_model, sigma2, log_term="exact")

        residual = np.vdot(y, y).real - abs(np.vdot(g, y)) ** 2 / np.vdot(g, g).real
        expected = grid.size * np.log(np.pi * 2.7 * sigma2) + residual / (2.7 * sigma2)
        assert value == pytest.approx(expected, rel=1e-10)

    def test_compact_log_term(self, flat_model, pilot):
        """The compact flat log term is ln((r+1) K pi sigma^2)"""
        y = 1.3 * g_vector(2, 1e-9, pilot, flat_model.fiber, 1.0)

        value = ml_objective_flat(y, 2, 1e-9, flat_model, 1.0)

        assert value == pytest.approx(np.log(3 * 64 * np.pi), abs=1e-9)

    def test_unknown_log_term(self, flat_model, pilot):
        """Only compact and exact are accepted"""
        with pytest.raises(InvalidInputError):
            ml_objective_flat(pilot.symbols, 1, 0, flat_model, 1.0, log_term="other")

    def test_prewhiten(self):
        """Each bin is divided by the square root of its variance"""
        y_w, g_w = prewhiten(np.array([2.0, 3.0]), np.array([4.0, 9.0]), np.array([4.0, 9.0]))

        np.testing.assert_allclose(y_w, [1.0, 1.0])
        np.testing.assert_allclose(g_w, [2.0, 3.0])

    def test_prewhiten_zero_variance(self):
        """Whitening a noiseless bin is degenerate"""
        with pytest.raises(DegenerateNoiseError):
            prewhiten(np.ones(2), np.ones(2), np.array([1.0, 0.0]))

    def test_objective_rejects_zero_sigma(self, selective_model, pilot):
        """sigma^2 must be positive"""
        with pytest.raises(InvalidInputError):
            ml_objective_selective(pilot.symbols, 1, 0, selective_model, 0.0)

    def test_residual_argmin_is_scale_free(self, selective_model, pilot, grid, rng):
        """Scaling y scales the flat residual term and keeps its (r, tau) argmin"""
        sigma2 = 0.1
        y = 1.2 * g_vector(2, 3e-9, pilot, selective_model.fiber, 1.0) + complex_gaussian(rng, sigma2, grid.size)
        taus = np.linspace(0, 6e-9, 25)

        def residual_term(data):
            return np.array([[ml_objective_flat(data, r, tau, selective_model, sigma2, log_term="exact")
                              - grid.size * np.log(np.pi * (r + 1) * sigma2) for tau in taus] for r in range(5)])

        base = residual_term(y)
        scaled = residual_term(3.7 * y)

        assert np.argmin(scaled) == np.argmin(base)
        np.testing.assert_allclose(scaled, 3.7 ** 2 * base, rtol=1e-9)

    def test_a_hat_unbiased(self, selective_model, pilot, rng):
        """Averaged over noisy draws the amplitude estimate matches the truth"""
        sigma2 = 0.5
        g = g_vector(2, 3e-9, pilot, selective_model.fiber, 1.0)
        amplitude = 0.8 * np.exp(0.3j)
        draws = amplitude * g + complex_gaussian(rng, sigma2, (10000, g.size))

        estimates = np.array([a_hat(y, g) for y in draws])

        spread = np.sqrt(sigma2 / np.vdot(g, g).real / len(draws))
        assert abs(np.mean(estimates) - amplitude) < 5 * spread

    def test_prewhitened_noise_is_white(self, rng):
        """Noise accumulated over a selective cascade has identity covariance after whitening"""
        grid = FrequencyGrid.centered(140e9, 1e9, 16)
        fiber = synth_fiber(SyntheticFiberSpec(kind="selective", total_energy=16), grid)
        chain = ChainParams(stages=3, noise_var=0.2, pa=PaParams(gain=1.0), fiber=fiber)
        noise = propagate_linear(np.zeros((100000, 16)), chain, rng)

        white, _ = prewhiten(noise, np.ones(16), effective_noise_variance(b_factors(fiber, 1.0), 3, 0.2))

        covariance = white.T @ white.conj() / len(white)
        np.testing.assert_allclose(covariance, np.eye(16), atol=0.03)

class TestGridSearch:
    """Test suite for the exhaustive (r, tau) search"""

    def test_noiseless_selective_recovery(self, selective_model, pilot, grid):
        """An on-grid noiseless block is recovered exactly"""
        search = SearchGrid2D.default_for(grid, (0, 5), (0, 40e-9))
        r_true, tau_true = search.r_values[30], search.tau_values[96]
        amplitude = 1.3 * np.exp(0.4j)
        y = amplitude * g_vector(r_true, tau_true, pilot, selective_model.fiber, 1.0)

        estimate = ml_grid_search(y, search, "selective", selective_model, 1e-6)

        assert estimate.r_hat == r_true
        assert estimate.r_hat_rounded == 3
        assert estimate.tau_hat == tau_true
        assert estimate.a_hat == pytest.approx(amplitude)
        assert estimate.evaluations == 51 * 321
        assert estimate.diagnostics["index"] == (30, 96)

    @pytest.mark.parametrize("regime", ["flat", "selective"])
    def test_matches_nested_loop(self, regime, selective_model, flat_model, pilot, grid, rng):
        """The vectorised search picks the same cell as scalar objective evaluations"""
        model = selective_model if regime == "selective" else flat_model
        search = SearchGrid2D(r_min=1.0, r_max=3.0, r_step=0.5, tau_min=8e-9, tau_max=12e-9, tau_step=1e-9)
        y = (0.8 * g_vector(2.2, 10.3e-9, pilot, model.fiber, 1.0)
             + complex_gaussian(rng, 0.05, grid.size))

        estimate = ml_grid_search(y, search, regime, model, 0.05, log_term="exact")

        values = np.array([[
            ml_objective_selective(y, r, tau, model, 0.05) if regime == "selective"
            else ml_objective_flat(y, r, tau, model, 0.05, log_term="exact")
            for tau in search.tau_values] for r in search.r_values])
        i, j = np.unravel_index(np.argmin(values), values.shape)
        assert estimate.diagnostics["index"] == (i, j)
        assert estimate.objective == pytest.approx(values[i, j], rel=1e-9)

    def test_flat_and_selective_agree_at_compensation(self, flat_model, pilot, grid, rng):
        """On a gain-compensated flat fiber the selective search equals the exact flat search"""
        search = SearchGrid2D.default_for(grid, (0, 4), (0, 20e-9))
        y = g_vector(2.0, 7e-9, pilot, flat_model.fiber, 1.0) + complex_gaussian(rng, 0.1, grid.size)

        flat = ml_grid_search(y, search, "flat", flat_model, 0.1, log_term="exact")
        selective = ml_grid_search(y, search, "selective", flat_model, 0.1)

        assert flat.diagnostics["index"] == selective.diagnostics["index"]
        assert flat.objective == pytest.approx(selective.objective, rel=1e-9)

    def test_tie_prefers_smaller_tau(self, flat_model, grid):
        """A y of zeros ties every tau; the smallest one wins"""
        search = SearchGrid2D(r_min=0, r_max=1, r_step=1, tau_min=2e-9, tau_max=4e-9, tau_step=1e-9)

        estimate = ml_grid_search(np.zeros(grid.size), search, "flat", flat_model, 1.0, log_term="exact")

        assert estimate.r_hat == 0
        assert estimate.tau_hat == 2e-9

    def test_rejects_wrong_shape(self, selective_model, grid):
        """y must have K bins"""
        search = SearchGrid2D.default_for(grid, (0, 5), (0, 40e-9))

        with pytest.raises(InvalidInputError):
            ml_grid_search(np.zeros(grid.size + 1), search, "selective", selective_model, 1.0)

    def test_rejects_unknown_regime(self, selective_model, grid):
        """Only flat and selective are known"""
        search = SearchGrid2D.default_for(grid, (0, 5), (0, 40e-9))

        with pytest.raises(InvalidInputError):
            ml_grid_search(np.zeros(grid.size), search, "dispersive", selective_model, 1.0)


@pytest.mark.slow
class TestEstimatorEfficiency:
    """Delay RMSE of the selective search against its Cramer-Rao bound"""

    def test_tau_rmse_near_bound(self, grid, pilot, selective_model):
        """At high SNR the delay RMSE sits just above sqrt(CRLB)"""
        sigma2, tau_true = 0.1, 12.003e-9
        chain = ChainParams(stages=3, noise_var=sigma2, pa=PaParams(gain=1.0), fiber=selective_model.fiber)
        search = SearchGrid2D(r_min=0.0, r_max=5.0, r_step=0.1, tau_min=11e-9, tau_max=13e-9,
                              tau_step=1 / (64 * grid.bandwidth))
        x = wireless_input(WirelessLink(amplitude=1.0, phase=0.4, tau=tau_true), pilot, grid)
        rng = np.random.default_rng(99)

        errors = [ml_grid_search(propagate_linear(x, chain, rng), search, "selective", selective_model,
                                 sigma2).tau_hat - tau_true for _ in range(2000)]

        bound = crlb([1.0, 0.4, tau_true, 3.0], selective_model, sigma2, "selective").std[2]
        ratio = np.sqrt(np.mean(np.square(errors))) / bound
        # two standard errors of an RMSE estimated from 2000 trials
        spread = 2 / np.sqrt(2 * len(errors))
        assert 1.0 - spread <= ratio <= 1.5
