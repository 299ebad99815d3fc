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
Fisher information and Cramer-Rao bounds for theta = [|A|, phi, tau, r].

The received spectrum is complex Gaussian with mean mu(theta) and diagonal
covariance C(r), so

    I_ij = 2 Re(d_i mu^H C^-1 d_j mu) + tr(C^-1 d_i C C^-1 d_j C)

and only r enters C. ``fim_flat`` and ``fim_selective`` are the closed forms of
that sum; ``numeric_fim`` assembles it from central differences and is used
to check them.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Union

import numpy as np

from rof_core.estimation.models import LinearModel
from rof_core.exceptions import InvalidInputError, RegimeViolationError
from rof_core.fiber_channel import FrequencyGrid, UnitFiberResponse, b_factors
from rof_core.rof_signal import FLAT_BRANCH_TOL, PilotSequence, effective_noise_variance

logger = logging.getLogger(__name__)

PARAMETERS = ("amplitude", "phase", "tau", "r")
SINGULAR_CONDITION = 1e12
COMPENSATION_TOL = 1e-6

Regime = Literal["flat", "selective"]


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """4x4 information matrix, parameter order [|A|, phi, tau, r]"""
    entries: np.ndarray
    regime: str

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (4, 4):
            raise InvalidInputError(f"Fisher matrix must be 4x4, got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidInputError("Fisher matrix has non-finite entries")
        scale = max(np.max(np.abs(entries)), np.finfo(float).tiny)
        if np.max(np.abs(entries - entries.T)) > 1e-12 * scale:
            raise InvalidInputError("Fisher matrix is not symmetric")
        trace = np.trace(entries)
        if np.min(np.linalg.eigvalsh(entries)) < -1e-9 * abs(trace):
            raise InvalidInputError("Fisher matrix is not positive semi-definite")
        object.__setattr__(self, "entries", entries)

    def __getitem__(self, key):
        return self.entries[key]


@dataclass(frozen=True, eq=False)
class CrlbResult:
    """
    Attributes:
        variances: lower bounds on Var(|A|), Var(phi) [rad^2], Var(tau) [s^2], Var(r)
        covariance: full inverse of the FIM
        condition_number: of the equilibrated FIM
        pseudo_inverse_used: set when condition_number exceeded the threshold
    """
    variances: np.ndarray
    covariance: np.ndarray
    condition_number: float
    pseudo_inverse_used: bool

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(self.variances, 0, None))

    def as_dict(self) -> dict:
        return {name: float(v) for name, v in zip(PARAMETERS, self.variances)}


def _unpack(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,):
        raise InvalidInputError(f"theta must be [|A|, phi, tau, r], got shape {theta.shape}")
    return theta


def _unit_mean(theta, pilot: PilotSequence, unit: UnitFiberResponse, gain: float, freqs) -> np.ndarray:
    _, phase, tau, r = theta
    return (gain ** (r + 1) * unit.magnitude ** r * pilot.symbols
            * np.exp(1j * (phase + r * unit.phase - 2 * np.pi * freqs * tau)))


def mean_vector(theta, pilot: PilotSequence, unit: UnitFiberResponse, gain: float,
                grid: Optional[FrequencyGrid] = None) -> np.ndarray:
    """mu_k = G^{r+1} |A| |H_k|^r s_k e^{j(phi + r psi_k - 2 pi f_k tau)}"""
    theta = _unpack(theta)
    if theta[3] < 0:
        raise InvalidInputError(f"r must be non-negative, got {theta[3]}")
    freqs = (unit.grid if grid is None else grid).freqs
    return theta[0] * _unit_mean(theta, pilot, unit, gain, freqs)


def mu_derivatives(theta, model: LinearModel, regime: Regime) -> np.ndarray:
    """
    Rows d mu / d|A|, d mu / d phi, d mu / d tau, d mu / d r.

    The selective r-derivative carries (ln sqrt(b_k) + j psi_k); the flat one
    keeps only j psi_k, exact at the compensation point b_k = 1.
    """
    theta = _unpack(theta)
    freqs = model.grid.freqs
    unit_mean = _unit_mean(theta, model.pilot, model.fiber, model.gain, freqs)
    mu = theta[0] * unit_mean
    if regime == "selective":
        r_factor = np.log(model.gain * model.fiber.magnitude) + 1j * model.fiber.phase
    elif regime == "flat":
        r_factor = 1j * model.fiber.phase
    else:
        raise InvalidInputError(f"regime must be 'flat' or 'selective', got '{regime}'")
    return np.vstack([
        unit_mean,
        1j * mu,
        -2j * np.pi * freqs * mu,
        r_factor * mu,
    ])


def _symmetric(upper: dict) -> np.ndarray:
    entries = np.zeros((4, 4))
    for (i, j), value in upper.items():
        entries[i, j] = entries[j, i] = value
    return entries


def _check(theta, sigma2: float):
    theta = _unpack(theta)
    if not sigma2 > 0:
        raise InvalidInputError(f"noise variance must be positive, got {sigma2}")
    if theta[3] < 0:
        raise InvalidInputError(f"r must be non-negative, got {theta[3]}")
    return theta


def fim_flat(theta, model: LinearModel, sigma2: float) -> FisherMatrix:
    """
    Closed-form FIM with covariance (r+1) sigma^2 I.

    Per-bin mean power is G^2 b_k^r |s_k|^2 |A|^2; |A| is decoupled from the
    other parameters and [I]_rr carries K/(r+1)^2 from the covariance.
    """
    amplitude, _, _, r = _check(theta, sigma2)
    b = b_factors(model.fiber, model.gain)
    deviation = np.max(np.abs(b - 1))
    if deviation > COMPENSATION_TOL:
        logger.warning(f"flat FIM evaluated {deviation:.3g} away from the compensation point b=1")
    f = model.grid.freqs
    psi = model.fiber.phase
    c = 2 / ((r + 1) * sigma2)
    w = model.gain ** 2 * b ** r * np.abs(model.pilot.symbols) ** 2
    a2 = amplitude ** 2
    k = f.size
    return FisherMatrix(entries=_symmetric({
        (0, 0): c * np.sum(w),
        (1, 1): c * a2 * np.sum(w),
        (1, 2): -2 * np.pi * c * a2 * np.sum(w * f),
        (1, 3): c * a2 * np.sum(w * psi),
        (2, 2): 4 * np.pi ** 2 * c * a2 * np.sum(w * f ** 2),
        (2, 3): -2 * np.pi * c * a2 * np.sum(w * f * psi),
        (3, 3): k / (r + 1) ** 2 + c * a2 * np.sum(w * psi ** 2),
    }), regime="flat")


def fim_selective(theta, model: LinearModel, sigma2: float) -> FisherMatrix:
    """
    Closed-form FIM with covariance sigma^2 (b_k^{r+1} - 1)/(b_k - 1) per bin.

    |A| couples to r through ln sqrt(b_k), and [I]_rr gains
    sum_k (b_k^{r+1} ln b_k / (b_k^{r+1} - 1))^2 from the covariance.

    Raises:
        RegimeViolationError: some b_k lies within 1e-9 of 1; use fim_flat
    """
    amplitude, _, _, r = _check(theta, sigma2)
    b = b_factors(model.fiber, model.gain)
    if np.any(np.abs(b - 1) <= FLAT_BRANCH_TOL):
        raise RegimeViolationError("b_k = 1 on some bins; use fim_flat for a gain-compensated flat fiber")
    f = model.grid.freqs
    psi = model.fiber.phase
    n = r + 1
    bn = b ** n
    q = (model.gain ** 2 * b ** r * np.abs(model.pilot.symbols) ** 2
         * (b - 1) / (sigma2 * (bn - 1)))
    ell = 0.5 * np.log(b)
    a = amplitude
    return FisherMatrix(entries=_symmetric({
        (0, 0): 2 * np.sum(q),
        (0, 3): 2 * a * np.sum(q * ell),
        (1, 1): 2 * a ** 2 * np.sum(q),
        (1, 2): -4 * np.pi * a ** 2 * np.sum(q * f),
        (1, 3): 2 * a ** 2 * np.sum(q * psi),
        (2, 2): 8 * np.pi ** 2 * a ** 2 * np.sum(q * f ** 2),
        (2, 3): -4 * np.pi * a ** 2 * np.sum(q * f * psi),
        (3, 3): np.sum((bn * np.log(b) / (bn - 1)) ** 2) + 2 * a ** 2 * np.sum(q * (ell ** 2 + psi ** 2)),
    }), regime="selective")


def fisher_information(theta, model: LinearModel, sigma2: float, regime: Regime) -> FisherMatrix:
    if regime == "flat":
        return fim_flat(theta, model, sigma2)
    if regime == "selective":
        return fim_selective(theta, model, sigma2)
    raise InvalidInputError(f"regime must be 'flat' or 'selective', got '{regime}'")


def _covariance(model: LinearModel, r: float, sigma2: float, regime: Regime):
    # per-bin variance and its r-derivative
    k = model.grid.size
    if regime == "flat":
        return np.full(k, (r + 1) * sigma2), np.full(k, sigma2)
    b = b_factors(model.fiber, model.gain)
    bn = b ** (r + 1)
    return effective_noise_variance(b, r, sigma2), sigma2 * bn * np.log(b) / (b - 1)


def numeric_fim(theta, model: LinearModel, sigma2: float, regime: Regime,
                step: Optional[Sequence[float]] = None) -> FisherMatrix:
    """
    FIM from central-difference mean derivatives and the closed-form
    covariance derivative.

    Default steps are h_i = 1e-6 max(s_i, |theta_i|) with scales
    s = (1, 1, 1 / (2 pi max|f_k|), 1).
    """
    theta = _check(theta, sigma2)
    freqs = model.grid.freqs
    if step is None:
        scales = np.array([1.0, 1.0, 1 / (2 * np.pi * np.max(np.abs(freqs))), 1.0])
        step = 1e-6 * np.maximum(scales, np.abs(theta))
    step = np.asarray(step, dtype=float)

    def mean(t):
        return t[0] * _unit_mean(t, model.pilot, model.fiber, model.gain, freqs)

    derivatives = np.empty((4, freqs.size), dtype=complex)
    for i in range(4):
        shift = np.zeros(4)
        shift[i] = step[i]
        derivatives[i] = (mean(theta + shift) - mean(theta - shift)) / (2 * step[i])

    variance, d_variance = _covariance(model, theta[3], sigma2, regime)
    entries = 2 * np.real(np.conj(derivatives) @ (derivatives / variance).T)
    entries[3, 3] += np.sum((d_variance / variance) ** 2)
    return FisherMatrix(entries=(entries + entries.T) / 2, regime=regime)


def crlb_from_fim(fim: Union[FisherMatrix, np.ndarray], singular_condition: float = SINGULAR_CONDITION) -> CrlbResult:
    """
    Invert the FIM after Jacobi equilibration.

    The condition number is that of the unit-diagonal matrix; above
    ``singular_condition`` the Moore-Penrose pseudo-inverse is used and flagged.
    """
    entries = fim.entries if isinstance(fim, FisherMatrix) else np.asarray(fim, dtype=float)
    if not np.all(np.isfinite(entries)):
        raise InvalidInputError("Fisher matrix has non-finite entries")
    diag = np.diag(entries)
    scale = np.where(diag > 0, np.sqrt(np.abs(diag)), 1.0)
    outer = np.outer(scale, scale)
    equilibrated = entries / outer
    condition = float(np.linalg.cond(equilibrated))
    pseudo = not np.isfinite(condition) or condition > singular_condition
    if pseudo:
        logger.warning(f"FIM condition number {condition:.3g} exceeds {singular_condition:.3g}; using pseudo-inverse")
        inverse = np.linalg.pinv(equilibrated)
    else:
        inverse = np.linalg.inv(equilibrated)
    covariance = inverse / outer
    covariance = (covariance + covariance.T) / 2
    return CrlbResult(
        variances=np.diag(covariance).copy(),
        covariance=covariance,
        condition_number=condition,
        pseudo_inverse_used=pseudo,
    )


def crlb(theta, model: LinearModel, sigma2: float, regime: Regime,
         singular_condition: float = SINGULAR_CONDITION) -> CrlbResult:
    return crlb_from_fim(fisher_information(theta, model, sigma2, regime), singular_condition)
