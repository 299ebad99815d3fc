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
Maximum-likelihood (r, tau) estimation in the linear PA regime.

With A concentrated out, the likelihood depends on (r, tau) only through the
residual of y after projection onto g(r, tau). The flat regime uses one noise
variance (r+1) sigma^2 for every bin; the selective regime whitens each bin by
its own effective variance and adds ln det of the covariance.
"""

import logging
from typing import Literal, Optional

import numpy as np

from rof_core.estimation.models import LinearModel, ParamEstimate, SearchGrid2D
from rof_core.exceptions import DegenerateModelError, DegenerateNoiseError, InvalidInputError
from rof_core.fiber_channel import FrequencyGrid, UnitFiberResponse, b_factors, powered_response
from rof_core.rof_signal import PilotSequence, effective_noise_variance

logger = logging.getLogger(__name__)

Regime = Literal["flat", "selective"]
LogTerm = Literal["compact", "exact"]

# tau values evaluated per steering block in the grid search
STEERING_CHUNK = 2048


def g_vector(r: float, tau: float, pilot: PilotSequence, unit: UnitFiberResponse, gain: float,
             grid: Optional[FrequencyGrid] = None) -> np.ndarray:
    """g_k = G^{r+1} e^{-j 2 pi f_k tau} H_k^r s_k"""
    grid = unit.grid if grid is None else grid
    return (gain ** (r + 1) * np.exp(-2j * np.pi * grid.freqs * tau)
            * powered_response(unit, r) * pilot.symbols)


def a_hat(y, g) -> complex:
    """Least-squares amplitude g^H y / ||g||^2"""
    norm2 = np.vdot(g, g).real
    if norm2 == 0:
        raise DegenerateModelError("regressor g is zero; the amplitude is unidentifiable")
    return complex(np.vdot(g, y) / norm2)


def _projection_residual(y, g) -> float:
    return float(np.sum(np.abs(y - a_hat(y, g) * g) ** 2))


def _check_sigma2(sigma2: float):
    if not sigma2 > 0:
        raise InvalidInputError(f"noise variance must be positive, got {sigma2}")


def _flat_log_term(r: float, bins: int, sigma2: float, log_term: LogTerm) -> float:
    if log_term == "compact":
        return float(np.log((r + 1) * bins * np.pi * sigma2))
    if log_term == "exact":
        return float(bins * np.log(np.pi * (r + 1) * sigma2))
    raise InvalidInputError(f"log_term must be 'compact' or 'exact', got '{log_term}'")


def ml_objective_flat(y, r: float, tau: float, model: LinearModel, sigma2: float,
                      log_term: LogTerm = "compact") -> float:
    """
    Flat-fiber negative log-likelihood with A concentrated out.

    ``log_term="compact"`` adds ln((r+1) K pi sigma^2); ``"exact"`` adds
    K ln(pi (r+1) sigma^2), the term of the full Gaussian likelihood.
    """
    _check_sigma2(sigma2)
    y = np.asarray(y, dtype=complex)
    g = g_vector(r, tau, model.pilot, model.fiber, model.gain)
    residual = _projection_residual(y, g)
    return _flat_log_term(r, y.size, sigma2, log_term) + residual / ((r + 1) * sigma2)


def prewhiten(y, g, variance):
    """Divide each bin of y and g by the square root of its noise variance"""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise DegenerateNoiseError("cannot whiten a bin with zero noise variance")
    scale = 1 / np.sqrt(variance)
    return np.asarray(y) * scale, np.asarray(g) * scale


def ml_objective_selective(y, r: float, tau: float, model: LinearModel, sigma2: float) -> float:
    """sum_k ln(pi v_k(r)) + whitened projection residual"""
    _check_sigma2(sigma2)
    variance = effective_noise_variance(b_factors(model.fiber, model.gain), r, sigma2)
    y_w, g_w = prewhiten(y, g_vector(r, tau, model.pilot, model.fiber, model.gain), variance)
    return float(np.sum(np.log(np.pi * variance))) + _projection_residual(y_w, g_w)


def ml_grid_search(y, search: SearchGrid2D, regime: Regime, model: LinearModel, sigma2: float,
                   log_term: LogTerm = "compact") -> ParamEstimate:
    """
    Exhaustive (r, tau) search.

    For each r the regressor is base_r * e^{-j 2 pi f tau}, so the projections
    onto every tau are one matrix product with the steering matrix. The first
    minimum in (r, tau) order wins, i.e. ties go to the smaller r, then the
    smaller tau.

    Args:
        y: received spectrum, K bins
        search: grid of candidate (r, tau)
        regime: "flat" or "selective"
        model: pilot, fiber and PA gain
        sigma2: per-amplifier noise variance
        log_term: flat-regime log term, see ml_objective_flat

    Returns:
        ParamEstimate at the grid minimiser
    """
    _check_sigma2(sigma2)
    if regime not in ("flat", "selective"):
        raise InvalidInputError(f"regime must be 'flat' or 'selective', got '{regime}'")
    y = np.asarray(y, dtype=complex)
    grid = model.grid
    if y.shape != (grid.size,):
        raise InvalidInputError(f"received spectrum has shape {y.shape}, expected ({grid.size},)")
    r_values = search.r_values
    tau_values = search.tau_values
    if r_values.size == 0 or tau_values.size == 0:
        raise InvalidInputError("search grid is empty")

    b = b_factors(model.fiber, model.gain)
    objective = np.empty((r_values.size, tau_values.size))
    for i, r in enumerate(r_values):
        if regime == "flat":
            variance = np.full(grid.size, (r + 1) * sigma2)
            log_part = _flat_log_term(r, grid.size, sigma2, log_term)
        else:
            variance = effective_noise_variance(b, r, sigma2)
            log_part = float(np.sum(np.log(np.pi * variance)))
        base = model.gain ** (r + 1) * powered_response(model.fiber, r) * model.pilot.symbols
        y_w, base_w = prewhiten(y, base, variance)
        g_norm2 = np.vdot(base_w, base_w).real
        if g_norm2 == 0:
            raise DegenerateModelError(f"regressor is zero at r={r}")
        y_norm2 = np.vdot(y_w, y_w).real
        weighted = np.conj(base_w) * y_w
        for start in range(0, tau_values.size, STEERING_CHUNK):
            taus = tau_values[start:start + STEERING_CHUNK]
            # conj of e^{-j 2 pi f tau}
            steering = np.exp(2j * np.pi * np.outer(taus, grid.freqs))
            corr = steering @ weighted
            objective[i, start:start + taus.size] = log_part + y_norm2 - np.abs(corr) ** 2 / g_norm2

    flat_index = int(np.argmin(objective))
    i, j = np.unravel_index(flat_index, objective.shape)
    r_best, tau_best = float(r_values[i]), float(tau_values[j])

    g = g_vector(r_best, tau_best, model.pilot, model.fiber, model.gain)
    if regime == "flat":
        amplitude = a_hat(y, g)
    else:
        amplitude = a_hat(*prewhiten(y, g, effective_noise_variance(b, r_best, sigma2)))
    logger.debug(f"ML {regime} search over {objective.size} cells: r={r_best:.3f} tau={tau_best:.4e}")
    return ParamEstimate(
        a_hat=amplitude,
        tau_hat=tau_best,
        r_hat=r_best,
        objective=float(objective[i, j]),
        evaluations=int(objective.size),
        diagnostics={"regime": regime, "grid_shape": objective.shape, "index": (int(i), int(j))},
    )
