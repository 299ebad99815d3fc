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
Unit-length fiber responses and their cascades.

A fiber segment is a linear time-invariant filter. Its unit-length response is
either ingested from a measured magnitude / group-delay trace or synthesised,
and an r-segment cascade is the r-th power of that response in the frequency
domain (fractional r allowed) or the r-fold self-convolution of its taps.

Conventions:
    - Phase at the lowest grid frequency is 0; absolute phase belongs to the
      wireless coefficient A.
    - psi(f) = -2*pi * integral of the group delay from f_0 to f.
    - DFT convention: H_k = sum_l taps_l exp(-j 2 pi k l / K).
"""

import csv
import logging
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.integrate import cumulative_trapezoid

from rof_core.exceptions import InvalidInputError, InvalidStateError, OutOfRangeError

logger = logging.getLogger(__name__)

TAP_TAIL_ENERGY = 1e-4
TAP_RECONSTRUCTION_TOL = 1e-6
UNIFORM_SPACING_TOL = 1e-9

MEASUREMENT_COLUMNS = ["freq_hz", "magnitude_db", "group_delay_s"]
CHANNEL_COLUMNS = MEASUREMENT_COLUMNS + ["phase_rad"]


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """
    K uniformly spaced frequencies shared by every spectrum of a run.

    Attributes:
        freqs: f_k in Hz, strictly increasing
        sample_interval: T_s in seconds
        n_time: time samples per block (N >= K)
    """
    freqs: np.ndarray
    sample_interval: float
    n_time: Optional[int] = None

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        if freqs.ndim != 1 or freqs.size < 2:
            raise InvalidInputError(f"a frequency grid needs at least 2 bins, got {freqs.size}")
        steps = np.diff(freqs)
        if np.any(steps <= 0):
            raise InvalidInputError("grid frequencies must be strictly increasing")
        if np.max(np.abs(steps - steps.mean())) > UNIFORM_SPACING_TOL * steps.mean():
            raise InvalidInputError("grid frequencies must be uniformly spaced")
        if not self.sample_interval > 0:
            raise InvalidInputError(f"sample interval must be positive, got {self.sample_interval}")
        n_time = freqs.size if self.n_time is None else int(self.n_time)
        if n_time < freqs.size:
            raise InvalidInputError(f"n_time ({n_time}) must be >= number of bins ({freqs.size})")
        freqs.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "sample_interval", float(self.sample_interval))
        object.__setattr__(self, "n_time", n_time)

    @classmethod
    def centered(cls, center_hz: float, bandwidth_hz: float, bins: int) -> "FrequencyGrid":
        """f_k = center - B/2 + k B / K, T_s = 1/B"""
        if bandwidth_hz <= 0:
            raise InvalidInputError(f"bandwidth must be positive, got {bandwidth_hz}")
        k = np.arange(bins)
        return cls(freqs=center_hz - bandwidth_hz / 2 + k * bandwidth_hz / bins,
                   sample_interval=1.0 / bandwidth_hz)

    @property
    def size(self) -> int:
        return self.freqs.size

    @property
    def spacing(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    @property
    def bandwidth(self) -> float:
        return self.spacing * self.size


@dataclass(frozen=True, eq=False)
class RawMeasurement:
    """Measured per-unit-length magnitude (dB) and group delay (s)"""
    freqs: np.ndarray
    magnitude_db: np.ndarray
    group_delay: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.freqs, self.magnitude_db, self.group_delay)]
        if len({a.size for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise InvalidInputError("measurement columns must have equal length")
        if arrays[0].size < 2:
            raise InvalidInputError("a measurement needs at least 2 frequencies")
        if np.any(np.diff(arrays[0]) <= 0):
            raise InvalidInputError("measurement frequencies must be strictly increasing")
        for name, value in zip(("freqs", "magnitude_db", "group_delay"), arrays):
            object.__setattr__(self, name, value)


@dataclass(frozen=True, eq=False)
class UnitFiberResponse:
    """
    Response of one unit length of fiber on a frequency grid.

    Attributes:
        grid: the frequency grid
        magnitude: |H_k|, linear
        phase: psi_k in radians
        taps: impulse response beta_l, or None for frequency-domain-only responses
    """
    grid: FrequencyGrid
    magnitude: np.ndarray
    phase: np.ndarray
    taps: Optional[np.ndarray] = None

    def __post_init__(self):
        magnitude = np.asarray(self.magnitude, dtype=float)
        phase = np.asarray(self.phase, dtype=float)
        k = self.grid.size
        if magnitude.shape != (k,) or phase.shape != (k,):
            raise InvalidInputError(f"magnitude and phase must have {k} bins")
        if np.any(magnitude < 0):
            raise InvalidInputError("magnitude must be non-negative")
        object.__setattr__(self, "magnitude", magnitude)
        object.__setattr__(self, "phase", phase)
        if self.taps is not None:
            taps = np.asarray(self.taps, dtype=complex)
            if taps.ndim != 1 or not 1 <= taps.size <= k:
                raise InvalidInputError(f"tap count must be within [1, {k}], got {taps.size}")
            error = np.max(np.abs(np.fft.fft(taps, k) - self.response))
            if error > TAP_RECONSTRUCTION_TOL * max(np.max(magnitude), np.finfo(float).tiny):
                raise InvalidInputError(f"taps do not reproduce the response (max error {error:.3g})")
            object.__setattr__(self, "taps", taps)

    @classmethod
    def from_taps(cls, taps, grid: FrequencyGrid) -> "UnitFiberResponse":
        taps = np.asarray(taps, dtype=complex)
        if taps.size > grid.size:
            raise InvalidInputError(f"{taps.size} taps do not fit on a {grid.size}-bin grid")
        response = np.fft.fft(taps, grid.size)
        return cls(grid=grid, magnitude=np.abs(response), phase=np.unwrap(np.angle(response)), taps=taps)

    @property
    def response(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)

    @property
    def energy(self) -> float:
        return float(np.sum(self.magnitude ** 2))


@dataclass(frozen=True)
class SelectiveShape:
    """Raised-cosine ripple a_k = 1 + depth cos(2 pi cycles k / K + offset)"""
    depth: float = 0.5
    cycles: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not 0 <= self.depth < 1:
            raise InvalidInputError(f"ripple depth must be within [0, 1), got {self.depth}")


@dataclass(frozen=True)
class SyntheticFiberSpec:
    kind: Literal["flat", "selective"]
    total_energy: float
    shape_params: SelectiveShape = field(default_factory=SelectiveShape)
    # bulk delay in samples, giving the linear phase -2 pi d k / K
    delay_samples: float = 0.0


def median_smooth(series, window: int) -> np.ndarray:
    """
    Centered running median.

    An even window is widened by one. Near the edges the window shrinks
    symmetrically, so output[i] is the median of series[i-h:i+h+1] with
    h = min(window // 2, i, n - 1 - i).

    Args:
        series: 1-d real samples
        window: window length, at most len(series)

    Returns:
        Smoothed series of the same length
    """
    values = np.asarray(series, dtype=float)
    n = values.size
    if n == 0:
        raise InvalidInputError("cannot smooth an empty series")
    if window <= 0:
        raise InvalidInputError(f"window must be positive, got {window}")
    if window > n:
        raise InvalidInputError(f"window ({window}) is longer than the series ({n})")
    if window % 2 == 0:
        window += 1
    if window > n:
        window = n if n % 2 else n - 1
    half = window // 2

    out = np.empty(n)
    out[half:n - half] = np.median(sliding_window_view(values, window), axis=1)
    for i in list(range(half)) + list(range(n - half, n)):
        h = min(half, i, n - 1 - i)
        out[i] = np.median(values[i - h:i + h + 1])
    return out


def phase_from_group_delay(freqs, group_delay) -> np.ndarray:
    """psi_k = -2 pi * trapezoidal integral of the group delay from f_0 to f_k"""
    freqs = np.asarray(freqs, dtype=float)
    group_delay = np.asarray(group_delay, dtype=float)
    if freqs.shape != group_delay.shape or freqs.ndim != 1:
        raise InvalidInputError("frequencies and group delay must be 1-d arrays of equal length")
    if freqs.size < 2:
        raise InvalidInputError("phase recovery needs at least 2 frequencies")
    if np.any(np.diff(freqs) <= 0):
        raise InvalidInputError("frequencies must be strictly increasing")
    return -2 * np.pi * cumulative_trapezoid(group_delay, freqs, initial=0.0)


def _truncate_taps(response: np.ndarray) -> np.ndarray:
    # smallest L keeping < 1e-4 of the tap energy in the tail that still reproduces H
    k = response.size
    full = np.fft.ifft(response)
    energy = np.abs(full) ** 2
    total = energy.sum()
    if total == 0:
        return np.zeros(1, dtype=complex)
    tail = total - np.cumsum(energy)
    limit = TAP_RECONSTRUCTION_TOL * np.max(np.abs(response))
    for length in range(1, k + 1):
        if tail[length - 1] >= TAP_TAIL_ENERGY * total:
            continue
        candidate = full[:length]
        if np.max(np.abs(np.fft.fft(candidate, k) - response)) <= limit:
            logger.debug(f"Truncated impulse response to {length} of {k} taps")
            return candidate
    return full


def build_unit_response(meas: RawMeasurement, grid: FrequencyGrid) -> UnitFiberResponse:
    """
    Resample a measurement onto the grid.

    Magnitude is interpolated linearly in dB. Phase comes from the linearly
    interpolated group delay integrated exactly on the union of measurement and
    grid frequencies, so psi at the grid's lowest bin is 0.

    Raises:
        OutOfRangeError: the grid extends beyond the measured span
    """
    f_lo, f_hi = grid.freqs[0], grid.freqs[-1]
    slack = UNIFORM_SPACING_TOL * grid.spacing
    if f_lo < meas.freqs[0] - slack or f_hi > meas.freqs[-1] + slack:
        raise OutOfRangeError(
            f"grid [{f_lo:.6g}, {f_hi:.6g}] Hz is outside the measured span "
            f"[{meas.freqs[0]:.6g}, {meas.freqs[-1]:.6g}] Hz"
        )
    magnitude = 10 ** (np.interp(grid.freqs, meas.freqs, meas.magnitude_db) / 20)

    inside = meas.freqs[(meas.freqs > f_lo) & (meas.freqs < f_hi)]
    nodes = np.union1d(inside, grid.freqs)
    psi_nodes = phase_from_group_delay(nodes, np.interp(nodes, meas.freqs, meas.group_delay))
    phase = psi_nodes[np.searchsorted(nodes, grid.freqs)]

    response = magnitude * np.exp(1j * phase)
    return UnitFiberResponse(grid=grid, magnitude=magnitude, phase=phase, taps=_truncate_taps(response))


def powered_response(unit: UnitFiberResponse, r: float) -> np.ndarray:
    """|H_k|^r exp(j r psi_k); fractional r is allowed"""
    if r < 0:
        raise InvalidInputError(f"segment count must be non-negative, got {r}")
    return unit.magnitude ** r * np.exp(1j * r * unit.phase)


def cascade_taps(unit: UnitFiberResponse, r: int) -> np.ndarray:
    """r-fold linear self-convolution of the unit taps, length r(L-1)+1"""
    if unit.taps is None:
        raise InvalidStateError("the fiber response has no impulse response taps")
    if int(r) != r or r < 1:
        raise InvalidInputError(f"time-domain cascades need an integer r >= 1, got {r}")
    return reduce(np.convolve, [unit.taps] * int(r))


def synth_fiber(spec: SyntheticFiberSpec, grid: FrequencyGrid) -> UnitFiberResponse:
    """
    Flat or raised-cosine selective fiber carrying total energy E = sum |H_k|^2.

    Both kinds share the linear phase of ``spec.delay_samples``.
    """
    if not spec.total_energy > 0:
        raise InvalidInputError(f"total energy must be positive, got {spec.total_energy}")
    k = np.arange(grid.size)
    if spec.kind == "flat":
        profile = np.ones(grid.size)
    elif spec.kind == "selective":
        shape = spec.shape_params
        profile = 1 + shape.depth * np.cos(2 * np.pi * shape.cycles * k / grid.size + shape.offset)
    else:
        raise InvalidInputError(f"unknown fiber kind '{spec.kind}'")
    magnitude = profile * np.sqrt(spec.total_energy / np.sum(profile ** 2))
    phase = -2 * np.pi * spec.delay_samples * k / grid.size
    return UnitFiberResponse(
        grid=grid,
        magnitude=magnitude,
        phase=phase,
        taps=_truncate_taps(magnitude * np.exp(1j * phase)),
    )


def b_factors(unit: UnitFiberResponse, gain: float) -> np.ndarray:
    """b_k = (G |H_k|)^2"""
    if not gain > 0:
        raise InvalidInputError(f"gain must be positive, got {gain}")
    return (gain * unit.magnitude) ** 2


def oversample_response(unit: UnitFiberResponse, oversample: int) -> UnitFiberResponse:
    """
    Band-limited extension of ``unit`` onto q*K bins.

    Bins 0..K-1 carry H, the rest are zero; taps are the full inverse DFT.
    """
    if int(oversample) != oversample or oversample < 1:
        raise InvalidInputError(f"oversampling factor must be a positive integer, got {oversample}")
    if oversample == 1:
        return unit
    grid = unit.grid
    size = grid.size * int(oversample)
    fine = FrequencyGrid(
        freqs=grid.freqs[0] + grid.spacing * np.arange(size),
        sample_interval=grid.sample_interval / oversample,
    )
    response = np.zeros(size, dtype=complex)
    response[:grid.size] = unit.response
    magnitude = np.abs(response)
    phase = np.zeros(size)
    phase[:grid.size] = unit.phase
    return UnitFiberResponse(grid=fine, magnitude=magnitude, phase=phase, taps=np.fft.ifft(response))


def smooth_measurement(meas: RawMeasurement, window: int) -> RawMeasurement:
    """Median-smooth magnitude and group delay separately"""
    return RawMeasurement(
        freqs=meas.freqs,
        magnitude_db=median_smooth(meas.magnitude_db, window),
        group_delay=median_smooth(meas.group_delay, window),
    )


def read_columns(path: Union[str, Path], columns: List[str]) -> np.ndarray:
    """Named float columns of a headed CSV; lines starting with # are skipped"""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    except OSError as e:
        raise InvalidInputError(f"{path}: cannot read ({e.strerror})") from e
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = [name.strip() for name in rows[0]]
    missing = [c for c in columns if c not in header]
    if missing:
        raise InvalidInputError(f"{path}: header lacks column(s) {', '.join(missing)}")
    index = [header.index(c) for c in columns]
    try:
        return np.array([[float(row[i]) for i in index] for row in rows[1:]], dtype=float).reshape(-1, len(columns))
    except (ValueError, IndexError) as e:
        raise InvalidInputError(f"{path}: malformed row ({e})") from e


def read_measurement(path: Union[str, Path]) -> RawMeasurement:
    data = read_columns(path, MEASUREMENT_COLUMNS)
    try:
        return RawMeasurement(freqs=data[:, 0], magnitude_db=data[:, 1], group_delay=data[:, 2])
    except InvalidInputError as e:
        raise InvalidInputError(f"{path}: {e}") from e


def write_rows(path: Union[str, Path], columns: List[str], rows: np.ndarray):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows([[repr(float(v)) for v in row] for row in rows])


def write_measurement(path: Union[str, Path], meas: RawMeasurement):
    write_rows(path, MEASUREMENT_COLUMNS, np.column_stack([meas.freqs, meas.magnitude_db, meas.group_delay]))


def export_channel(unit: UnitFiberResponse) -> np.ndarray:
    """
    Rows (freq_hz, magnitude_db, group_delay_s, phase_rad) of a unit response.

    Group delay is -(1/2 pi) d psi / df by second-order finite differences.
    """
    freqs = unit.grid.freqs
    with np.errstate(divide="ignore"):
        magnitude_db = 20 * np.log10(unit.magnitude)
    group_delay = -np.gradient(unit.phase, freqs, edge_order=2) / (2 * np.pi)
    return np.column_stack([freqs, magnitude_db, group_delay, unit.phase])


def write_channel(path: Union[str, Path], unit: UnitFiberResponse):
    write_rows(path, CHANNEL_COLUMNS, export_channel(unit))
