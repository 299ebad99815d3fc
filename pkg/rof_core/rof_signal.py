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
Uplink signal generation through a radio-over-fiber cascade.

The UE pilot enters the chain at an entry radio unit, then crosses r fiber
segments, each followed by a power amplifier, before reaching the central unit.

Two regimes:
    - linear PAs (nonlin == 0): closed form in the frequency domain,
      y_k = G^{r+1} H_k^r x_k + noise accumulated over all r+1 amplifiers.
    - cubic PAs: time-domain recursion on an oversampled block, with noise
      injected at the entry amplifier and at the central unit only.

Every random draw comes from the ``rng`` argument (a numpy Generator).
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from rof_core.exceptions import InvalidInputError, InvalidStateError, WrongRegimeError
from rof_core.fiber_channel import (
    FrequencyGrid,
    UnitFiberResponse,
    b_factors,
    oversample_response,
    powered_response,
)

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0  # m/s

# PA nonlinearity factors (1/V^2) of the mild and strong amplifier curves
NONLIN_MILD = -0.5
NONLIN_STRONG = -1.0

FLAT_BRANCH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PilotSequence:
    symbols: np.ndarray
    modulation: str = "qpsk"

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=complex)
        if symbols.ndim != 1 or symbols.size == 0:
            raise InvalidInputError("pilot must be a non-empty 1-d sequence")
        if np.max(np.abs(np.abs(symbols) - 1)) > 1e-12:
            raise InvalidInputError("pilot symbols must have unit amplitude")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self):
        return self.symbols.size


def qpsk_pilot(bins: int, rng: np.random.Generator) -> PilotSequence:
    """Unit-amplitude QPSK symbols exp(j(pi/4 + m pi/2))"""
    m = rng.integers(0, 4, size=bins)
    return PilotSequence(symbols=np.exp(1j * (np.pi / 4 + m * np.pi / 2)))


@dataclass(frozen=True)
class WirelessLink:
    """
    Line-of-sight UE-to-entry-RU link.

    Attributes:
        amplitude: |A|
        phase: phi in radians
        tau: total delay in seconds, TOA plus clock offset
        clock_offset: delta_t in seconds
        distance: d in meters, when built from geometry
    """
    amplitude: float
    phase: float
    tau: float
    clock_offset: float = 0.0
    distance: Optional[float] = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidInputError(f"amplitude must be non-negative, got {self.amplitude}")

    @classmethod
    def from_geometry(cls, distance: float, clock_offset: float, amplitude: float, phase: float = 0.0) -> "WirelessLink":
        return cls(
            amplitude=amplitude,
            phase=phase,
            tau=distance / SPEED_OF_LIGHT + clock_offset,
            clock_offset=clock_offset,
            distance=distance,
        )


@dataclass(frozen=True)
class PaParams:
    gain: float
    nonlin: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise InvalidInputError(f"PA gain must be positive, got {self.gain}")

    @classmethod
    def from_db(cls, gain_db: float, nonlin: float = 0.0) -> "PaParams":
        return cls(gain=10 ** (gain_db / 20), nonlin=nonlin)

    @property
    def is_linear(self) -> bool:
        return self.nonlin == 0


@dataclass(frozen=True)
class ChainParams:
    """
    One radio-over-fiber chain as seen from the entry RU.

    Attributes:
        stages: r, number of fiber segments between entry RU and CU
        noise_var: sigma^2 per complex sample per amplifier
        pa: amplifier parameters shared by all RUs
        fiber: unit-length fiber response
    """
    stages: float
    noise_var: float
    pa: PaParams
    fiber: UnitFiberResponse

    def __post_init__(self):
        if self.stages < 0:
            raise InvalidInputError(f"stage count must be non-negative, got {self.stages}")
        if self.noise_var < 0:
            raise InvalidInputError(f"noise variance must be non-negative, got {self.noise_var}")

    @property
    def grid(self) -> FrequencyGrid:
        return self.fiber.grid


@dataclass(frozen=True)
class PathlossParams:
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    wavelength: float = 1.0
    shadow_sigma_db: float = 0.0

    def __post_init__(self):
        if not (self.tx_gain > 0 and self.rx_gain > 0 and self.wavelength > 0):
            raise InvalidInputError("antenna gains and wavelength must be positive")
        if self.shadow_sigma_db < 0:
            raise InvalidInputError(f"shadowing std must be non-negative, got {self.shadow_sigma_db}")


def complex_gaussian(rng: np.random.Generator, variance, shape) -> np.ndarray:
    """CN(0, v) samples: v/2 per real and imaginary component"""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def wireless_input(link: WirelessLink, pilot: PilotSequence, grid: FrequencyGrid) -> np.ndarray:
    """x_k = |A| e^{j phi} e^{-j 2 pi f_k tau} s_k"""
    if len(pilot) != grid.size:
        raise InvalidInputError(f"pilot length {len(pilot)} does not match {grid.size} bins")
    return (link.amplitude * np.exp(1j * link.phase)
            * np.exp(-2j * np.pi * grid.freqs * link.tau) * pilot.symbols)


def pathloss_amplitude(params: PathlossParams, distance: float, rng: np.random.Generator) -> float:
    """
    |A| = Gt Gr (lambda / (2 pi d))^2 with log-normal shadowing.

    The shadowing term is 10^(X/20), X ~ N(0, sigma_dB^2), so the spread of
    |A| in dB has the configured standard deviation.
    """
    if not distance > 0:
        raise InvalidInputError(f"distance must be positive, got {distance}")
    base = params.tx_gain * params.rx_gain * (params.wavelength / (2 * np.pi * distance)) ** 2
    if params.shadow_sigma_db == 0:
        return float(base)
    shadow_db = rng.normal(0.0, params.shadow_sigma_db)
    return max(float(base * 10 ** (shadow_db / 20)), 0.0)


def effective_noise_variance(b, r: float, sigma2: float) -> np.ndarray:
    """
    Per-bin variance of the noise accumulated by r+1 amplifiers.

    sigma^2 (b^{r+1} - 1) / (b - 1), and (r+1) sigma^2 where |b - 1| <= 1e-9.
    Non-integer r is allowed.
    """
    if r < 0:
        raise InvalidInputError(f"r must be non-negative, got {r}")
    if sigma2 < 0:
        raise InvalidInputError(f"noise variance must be non-negative, got {sigma2}")
    b = np.asarray(b, dtype=float)
    delta = b - 1
    flat = np.abs(delta) <= FLAT_BRANCH_TOL
    safe = np.where(flat, 1.0, delta)
    geometric = np.expm1((r + 1) * np.log1p(safe)) / safe
    return sigma2 * np.where(flat, r + 1, geometric)


def _check_rng(chain: ChainParams, rng: Optional[np.random.Generator]):
    if chain.noise_var > 0 and rng is None:
        raise InvalidInputError(f"noise variance {chain.noise_var} needs a random Generator")


def propagate_linear(x, chain: ChainParams, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    y_k = G^{r+1} H_k^r x_k + w_k with w_k ~ CN(0, effective_noise_variance).

    ``rng`` may be omitted when chain.noise_var is 0.
    """
    pa = chain.pa
    if not pa.is_linear:
        raise WrongRegimeError("propagate_linear needs linear PAs; use propagate_nonlinear")
    _check_rng(chain, rng)
    x = np.asarray(x, dtype=complex)
    r = chain.stages
    y = pa.gain ** (r + 1) * powered_response(chain.fiber, r) * x
    if chain.noise_var > 0:
        variance = effective_noise_variance(b_factors(chain.fiber, pa.gain), r, chain.noise_var)
        y = y + complex_gaussian(rng, variance, y.shape)
    return y


def time_domain_input(x, grid: FrequencyGrid, oversample: int = 1) -> np.ndarray:
    """
    x(n) = (1/K) sum_k x_k exp(j 2 pi k n / (qK)), n = 0..qK-1.

    Decimating the output by q gives the q = 1 block.
    """
    if int(oversample) != oversample or oversample < 1:
        raise InvalidInputError(f"oversampling factor must be a positive integer, got {oversample}")
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != grid.size:
        raise InvalidInputError(f"spectrum has {x.shape[-1]} bins, grid has {grid.size}")
    padded = np.zeros(x.shape[:-1] + (grid.size * int(oversample),), dtype=complex)
    padded[..., :grid.size] = x
    return oversample * np.fft.ifft(padded, axis=-1)


def spectrum_from_time(samples, bins: int, oversample: int = 1) -> np.ndarray:
    """In-band bins of a time block produced by time_domain_input"""
    samples = np.asarray(samples, dtype=complex)
    return np.fft.fft(samples, axis=-1)[..., :bins] / oversample


def pa_apply(x, pa: PaParams) -> np.ndarray:
    """G (x + lambda x |x|^2)"""
    x = np.asarray(x, dtype=complex)
    if pa.nonlin == 0:
        return pa.gain * x
    return pa.gain * (x + pa.nonlin * x * np.abs(x) ** 2)


def stage_function(y, chain: ChainParams) -> np.ndarray:
    """
    One fiber segment followed by one PA.

    Causal FIR u_n = sum_l beta_l y_{n-l} with zero history, then pa_apply.
    Works along the last axis, so a stack of blocks can be filtered at once.
    """
    taps = chain.fiber.taps
    if taps is None:
        raise InvalidStateError("the fiber response has no impulse response taps")
    u = lfilter(taps, [1.0], np.asarray(y, dtype=complex), axis=-1)
    return pa_apply(u, chain.pa)


def apply_cascade(y0, chain: ChainParams, r: int) -> np.ndarray:
    """
    r applications of stage_function behind a cyclic prefix.

    The prefix holds r(L-1) samples and is stripped at the CU, so each block
    sees circular convolution with the fiber taps.
    """
    if chain.fiber.taps is None:
        raise InvalidStateError("the fiber response has no impulse response taps")
    y0 = np.asarray(y0, dtype=complex)
    n = y0.shape[-1]
    prefix = int(r) * (chain.fiber.taps.size - 1)
    block = y0[..., np.arange(-prefix, n) % n] if prefix else y0
    for _ in range(int(r)):
        block = stage_function(block, chain)
    return block[..., prefix:]


def oversampled_chain(chain: ChainParams, samples: int) -> ChainParams:
    """Chain whose fiber matches a block of ``samples`` = q*K time samples"""
    bins = chain.grid.size
    if samples % bins:
        raise InvalidInputError(f"block of {samples} samples is not a multiple of {bins} bins")
    q = samples // bins
    if q == 1:
        return chain
    return replace(chain, fiber=oversample_response(chain.fiber, q))


def nonlinear_mean(x_time, chain: ChainParams) -> np.ndarray:
    """Noiseless f^r(pa_apply(x)); the last axis is time"""
    r = chain.stages
    if int(r) != r:
        raise InvalidInputError(f"the nonlinear cascade needs an integer r, got {r}")
    x_time = np.asarray(x_time, dtype=complex)
    y0 = pa_apply(x_time, chain.pa)
    if r == 0:
        return y0
    return apply_cascade(y0, oversampled_chain(chain, x_time.shape[-1]), int(r))


def propagate_nonlinear(x_time, chain: ChainParams, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Time-domain propagation through cubic PAs.

    y0 = pa_apply(x) + w0, then y_r = f^r(y0) + w_r; w0 and w_r are CN(0, sigma^2)
    per sample and no noise is added between intermediate stages. The
    oversampling factor is len(x_time) / K.
    """
    r = chain.stages
    if int(r) != r:
        raise InvalidInputError(f"the nonlinear cascade needs an integer r, got {r}")
    _check_rng(chain, rng)
    x_time = np.asarray(x_time, dtype=complex)
    stage_chain = oversampled_chain(chain, x_time.shape[-1])
    noisy = chain.noise_var > 0

    y = pa_apply(x_time, chain.pa)
    if noisy:
        y = y + complex_gaussian(rng, chain.noise_var, y.shape)
    if r == 0:
        return y
    y = apply_cascade(y, stage_chain, int(r))
    if noisy:
        y = y + complex_gaussian(rng, chain.noise_var, y.shape)
    return y
