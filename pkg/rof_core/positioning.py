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
Indoor UE positioning from the delays estimated on three RoFs.

Layout: RoF m (1..M) runs along x at y = m*gamma in the ceiling plane z = 0; its
RU r (1..U) sits at x = (r + (m-1)*stagger)*gamma and is r fiber segments from
the CU. The UE is ``ue_height`` below the ceiling. Every RoF shares one clock
offset delta_t, which the solver removes by projecting the range residuals
onto the complement of the all-ones vector.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from rof_core.estimation.ml import ml_grid_search
from rof_core.estimation.models import LinearModel, SearchGrid2D
from rof_core.exceptions import DegenerateGeometryError, InvalidInputError
from rof_core.fiber_channel import FrequencyGrid, SyntheticFiberSpec, UnitFiberResponse, read_columns, synth_fiber
from rof_core.rof_signal import (
    SPEED_OF_LIGHT,
    ChainParams,
    PaParams,
    PathlossParams,
    PilotSequence,
    WirelessLink,
    pathloss_amplitude,
    propagate_linear,
    qpsk_pilot,
    wireless_input,
)

logger = logging.getLogger(__name__)

MAX_GRID_CELLS = 250_000

TRAJECTORY_COLUMNS = ["px_m", "py_m"]


@dataclass(frozen=True)
class DeploymentGeometry:
    """
    Attributes:
        spacing: gamma, RU pitch along a RoF and pitch between RoFs (m)
        rofs: M
        rus_per_rof: U
        ue_height: UE distance below the ceiling (m)
        stagger: x offset of RoF m is (m-1)*stagger*gamma
    """
    spacing: float = 1.0
    rofs: int = 3
    rus_per_rof: int = 5
    ue_height: float = 1.5
    stagger: float = 0.0

    def __post_init__(self):
        if not self.spacing > 0:
            raise InvalidInputError(f"spacing must be positive, got {self.spacing}")
        if self.rofs < 3:
            raise InvalidInputError(f"2-D positioning with a clock offset needs >= 3 RoFs, got {self.rofs}")
        if self.rus_per_rof < 1:
            raise InvalidInputError(f"a RoF needs at least one RU, got {self.rus_per_rof}")

    def ue(self, px: float, py: float) -> "UePosition":
        """UE at (px, py) on the plane ue_height below the ceiling"""
        return UePosition(px=px, py=py, pz=-self.ue_height)


@dataclass(frozen=True)
class UePosition:
    px: float
    py: float
    pz: float = -1.5

    def __post_init__(self):
        if not np.all(np.isfinite([self.px, self.py, self.pz])):
            raise InvalidInputError("UE coordinates must be finite")


@dataclass(frozen=True)
class ToaSet:
    """
    Delays measured on a set of RoFs.

    Attributes:
        taus: tau per RoF (s)
        entry_rus: entry RU index per RoF
        rofs: RoF indices the delays belong to; defaults to 1..len(taus)
    """
    taus: Tuple[float, ...]
    entry_rus: Tuple[int, ...]
    rofs: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "entry_rus", tuple(int(r) for r in self.entry_rus))
        rofs = tuple(range(1, len(self.taus) + 1)) if self.rofs is None else tuple(int(m) for m in self.rofs)
        object.__setattr__(self, "rofs", rofs)
        if not len(self.taus) == len(self.entry_rus) == len(self.rofs):
            raise InvalidInputError("taus, entry_rus and rofs must have equal length")


@dataclass(frozen=True)
class SearchRegion:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cell: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError("search region is empty")
        if not self.cell > 0:
            raise InvalidInputError(f"grid cell must be positive, got {self.cell}")

    @classmethod
    def covering(cls, geom: DeploymentGeometry, rofs: Sequence[int], bandwidth: float) -> "SearchRegion":
        """Box over the ceiling area of ``rofs`` with cell c / (4 B)"""
        gamma = geom.spacing
        offsets = [(m - 1) * geom.stagger for m in rofs]
        return cls(
            x_min=(min(offsets) + 0.5) * gamma,
            x_max=(max(offsets) + geom.rus_per_rof + 0.5) * gamma,
            y_min=(min(rofs) - 1) * gamma,
            y_max=(max(rofs) + 1) * gamma,
            cell=SPEED_OF_LIGHT / (4 * bandwidth),
        )


def _check_indices(geom: DeploymentGeometry, m: int, r: int):
    if not 1 <= m <= geom.rofs:
        raise InvalidInputError(f"RoF index {m} outside [1, {geom.rofs}]")
    if not 1 <= r <= geom.rus_per_rof:
        raise InvalidInputError(f"RU index {r} outside [1, {geom.rus_per_rof}]")


def ru_position(geom: DeploymentGeometry, m: int, r: int) -> Tuple[float, float, float]:
    _check_indices(geom, m, r)
    return ((r + (m - 1) * geom.stagger) * geom.spacing, m * geom.spacing, 0.0)


def ru_ue_distance(geom: DeploymentGeometry, m: int, r: int, ue: UePosition) -> float:
    x, y, z = ru_position(geom, m, r)
    return float(np.sqrt((ue.px - x) ** 2 + (ue.py - y) ** 2 + (ue.pz - z) ** 2))


def nearest_ru(geom: DeploymentGeometry, m: int, ue: UePosition) -> int:
    """Closest RU of RoF m; ties go to the smaller index"""
    distances = [ru_ue_distance(geom, m, r, ue) for r in range(1, geom.rus_per_rof + 1)]
    return int(np.argmin(distances)) + 1


def serving_rofs(geom: DeploymentGeometry, ue: UePosition, count: int = 3) -> List[int]:
    """The ``count`` RoFs nearest to the UE in y, ascending; ties go to the smaller index"""
    offsets = [abs(ue.py - m * geom.spacing) for m in range(1, geom.rofs + 1)]
    order = sorted(range(geom.rofs), key=lambda i: (offsets[i], i))
    return sorted(i + 1 for i in order[:count])


def clock_offset_hat(residuals) -> float:
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size < 1:
        raise InvalidInputError("need at least one residual")
    return float(np.mean(residuals))


def delay_resolution(bandwidth: float) -> float:
    """c / B in meters"""
    if not bandwidth > 0:
        raise InvalidInputError(f"bandwidth must be positive, got {bandwidth}")
    return SPEED_OF_LIGHT / bandwidth


def _anchors(geom: DeploymentGeometry, toas: ToaSet) -> np.ndarray:
    return np.array([ru_position(geom, m, r) for m, r in zip(toas.rofs, toas.entry_rus)])


def _is_mirror_ambiguous(anchors: np.ndarray) -> bool:
    # all anchors on one line in the ceiling plane
    centered = anchors[:, :2] - anchors[0, :2]
    return np.linalg.matrix_rank(centered, tol=1e-9) < 2


def _axis(lo: float, hi: float, cell: float) -> np.ndarray:
    # end points included; spacing at most cell
    return np.linspace(lo, hi, int(np.ceil((hi - lo) / cell - 1e-9)) + 1)


def position_solve(toas: ToaSet, geom: DeploymentGeometry, region: SearchRegion) -> Tuple[float, float]:
    """
    Minimise ||R - mean(R)||^2 over (Px, Py), R = tau - d(Px, Py) / c.

    A coarse grid over ``region`` picks the start point (the first minimum in
    x-major order), then a trust-region least-squares step refines it.
    Residuals are handled in meters (c * R).

    Raises:
        InvalidInputError: fewer than 3 RoFs
        DegenerateGeometryError: the objective is constant over the region
    """
    if len(toas.taus) < 3:
        raise InvalidInputError(f"position solving needs delays from >= 3 RoFs, got {len(toas.taus)}")
    anchors = _anchors(geom, toas)
    ranges = SPEED_OF_LIGHT * np.asarray(toas.taus)
    height2 = geom.ue_height ** 2
    if _is_mirror_ambiguous(anchors):
        logger.warning("serving RUs are collinear; the position is only defined up to a mirror image")

    def residual(p):
        d = np.sqrt((p[0] - anchors[:, 0]) ** 2 + (p[1] - anchors[:, 1]) ** 2 + height2)
        rho = ranges - d
        return rho - rho.mean()

    cell = max(region.cell, np.sqrt((region.x_max - region.x_min) * (region.y_max - region.y_min) / MAX_GRID_CELLS))
    xs = _axis(region.x_min, region.x_max, cell)
    ys = _axis(region.y_min, region.y_max, cell)
    px, py = np.meshgrid(xs, ys, indexing="ij")
    d = np.sqrt((px[..., None] - anchors[:, 0]) ** 2 + (py[..., None] - anchors[:, 1]) ** 2 + height2)
    rho = ranges - d
    cost = np.sum((rho - rho.mean(axis=-1, keepdims=True)) ** 2, axis=-1)
    if np.ptp(cost) <= 1e-12 * (1 + np.max(cost)):
        raise DegenerateGeometryError("positioning objective is constant over the search region")
    i, j = np.unravel_index(int(np.argmin(cost)), cost.shape)
    lower = np.array([region.x_min, region.y_min])
    upper = np.array([region.x_max, region.y_max])
    start = np.clip([xs[i], ys[j]], lower, upper)

    fit = least_squares(
        residual,
        start,
        bounds=(lower, upper),
        xtol=1e-12,
        ftol=1e-15,
        gtol=1e-15,
    )
    logger.debug(f"Position grid start {start} refined to {fit.x} in {fit.nfev} evaluations")
    return float(fit.x[0]), float(fit.x[1])


def position_error_bound(geom: DeploymentGeometry, ue: UePosition, toas_rofs: Sequence[int],
                         entry_rus: Sequence[int], tau_variances: Sequence[float]) -> float:
    """
    sqrt(Var(Px) + Var(Py)) lower bound in meters with delta_t as a nuisance.

    Built from d(c tau_m) / d(Px, Py, c delta_t) and independent per-RoF delay
    variances; a singular geometry falls back to the pseudo-inverse.
    """
    variances = np.asarray(tau_variances, dtype=float)
    if np.any(variances <= 0):
        raise InvalidInputError("delay variances must be positive")
    rows = []
    for m, r in zip(toas_rofs, entry_rus):
        x, y, _ = ru_position(geom, m, r)
        d = ru_ue_distance(geom, m, r, ue)
        rows.append([(ue.px - x) / d, (ue.py - y) / d, 1.0])
    # ranges in meters, so the offset column has the scale of the position columns
    jac = np.array(rows)
    info = jac.T @ (jac / (SPEED_OF_LIGHT ** 2 * variances)[:, None])
    bound = np.linalg.pinv(info)
    return float(np.sqrt(max(bound[0, 0] + bound[1, 1], 0.0)))


@dataclass(frozen=True)
class TrajectorySetup:
    """
    Everything needed to simulate the three serving uplinks at one UE position.

    Attributes:
        geometry: deployment
        bins, center_hz, bandwidth: frequency grid
        fiber: fiber of every RoF, synthetic spec or ready response
        gain_db: PA gain
        noise_var: sigma^2 per amplifier
        amplitude: |A| when pathloss is None
        pathloss: draw |A| from distance instead
        clock_offset: delta_t shared by all RoFs (s)
        trials: Monte Carlo repetitions per point
        tau_range: delay search range (s)
    """
    geometry: DeploymentGeometry
    bins: int
    center_hz: float
    bandwidth: float
    fiber: Union[SyntheticFiberSpec, UnitFiberResponse]
    gain_db: float = 0.0
    noise_var: float = 1e-3
    amplitude: float = 1.0
    pathloss: Optional[PathlossParams] = None
    clock_offset: float = 0.0
    trials: int = 1
    tau_range: Tuple[float, float] = (0.0, 20e-9)

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError(f"trials must be >= 1, got {self.trials}")
        if self.geometry.rus_per_rof < 2:
            raise InvalidInputError("entry RU estimation needs at least 2 RUs per RoF")
        span = self.tau_range[1] - self.tau_range[0]
        if span >= self.bins / self.bandwidth:
            raise InvalidInputError(
                f"delay range {span:.3g} s aliases; it must be shorter than K/B = {self.bins / self.bandwidth:.3g} s"
            )

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.centered(self.center_hz, self.bandwidth, self.bins)

    def unit(self) -> UnitFiberResponse:
        if isinstance(self.fiber, UnitFiberResponse):
            if self.fiber.grid.size != self.bins:
                raise InvalidInputError(f"fiber has {self.fiber.grid.size} bins, setup has {self.bins}")
            return self.fiber
        return synth_fiber(self.fiber, self.grid)

    @property
    def regime(self) -> str:
        if isinstance(self.fiber, SyntheticFiberSpec):
            return "flat" if self.fiber.kind == "flat" else "selective"
        magnitude = self.fiber.magnitude
        return "flat" if np.ptp(magnitude) <= 1e-12 * np.max(magnitude) else "selective"


@dataclass(frozen=True)
class PositionRecord:
    point: int
    trial: int
    px_true: float
    py_true: float
    px_hat: float
    py_hat: float

    @property
    def err_m(self) -> float:
        return float(np.hypot(self.px_hat - self.px_true, self.py_hat - self.py_true))


@dataclass
class TrajectoryResult:
    records: List[PositionRecord] = field(default_factory=list)

    @property
    def rmse(self) -> float:
        if not self.records:
            return float("nan")
        return float(np.sqrt(np.mean([r.err_m ** 2 for r in self.records])))

    def point_rmse(self, point: int) -> float:
        errors = [r.err_m ** 2 for r in self.records if r.point == point]
        return float(np.sqrt(np.mean(errors))) if errors else float("nan")


def locate_once(ue: UePosition, setup: TrajectorySetup, pilot: PilotSequence, unit: UnitFiberResponse,
                rng: np.random.Generator) -> Tuple[float, float]:
    """
    Simulate, estimate and solve once for a UE at ``ue``.

    Each serving RoF is entered through its nearest RU r and carries the signal
    over r segments; its (r, tau) is estimated on an integer r grid [1, U] and
    round(r_hat) is taken as the entry RU.
    """
    geom = setup.geometry
    grid = unit.grid
    gain = 10 ** (setup.gain_db / 20)
    model = LinearModel(pilot=pilot, fiber=unit, gain=gain)
    search = SearchGrid2D(
        r_min=1, r_max=geom.rus_per_rof, r_step=1,
        tau_min=setup.tau_range[0], tau_max=setup.tau_range[1], tau_step=1 / (8 * grid.bandwidth),
    )
    rofs = serving_rofs(geom, ue)
    taus, entries = [], []
    for m in rofs:
        entry = nearest_ru(geom, m, ue)
        distance = ru_ue_distance(geom, m, entry, ue)
        amplitude = (setup.amplitude if setup.pathloss is None
                     else pathloss_amplitude(setup.pathloss, distance, rng))
        link = WirelessLink.from_geometry(distance, setup.clock_offset, amplitude, rng.uniform(-np.pi, np.pi))
        chain = ChainParams(stages=entry, noise_var=setup.noise_var, pa=PaParams(gain=gain), fiber=unit)
        y = propagate_linear(wireless_input(link, pilot, grid), chain, rng)
        estimate = ml_grid_search(
            y, search, setup.regime, model, setup.noise_var,
            log_term="exact",
        )
        taus.append(estimate.tau_hat)
        entries.append(int(np.clip(estimate.r_hat_rounded, 1, geom.rus_per_rof)))
    region = SearchRegion.covering(geom, rofs, grid.bandwidth)
    return position_solve(ToaSet(taus=taus, entry_rus=entries, rofs=rofs), geom, region)


def trajectory_experiment(trajectory: Sequence[UePosition], setup: TrajectorySetup, rng: np.random.Generator,
                          on_point: Optional[Callable[[int, List[PositionRecord]], None]] = None) -> TrajectoryResult:
    """
    Monte Carlo positioning along a trajectory.

    The pilot is drawn once from ``rng``; every (point, trial) then gets its own
    Generator from a seed drawn up front, so the result does not depend on
    evaluation order.
    """
    if not trajectory:
        raise InvalidInputError("trajectory is empty")
    unit = setup.unit()
    pilot = qpsk_pilot(setup.bins, rng)
    seeds = rng.integers(0, 2 ** 63, size=(len(trajectory), setup.trials))
    result = TrajectoryResult()
    for i, ue in enumerate(trajectory):
        records = []
        for j in range(setup.trials):
            px, py = locate_once(ue, setup, pilot, unit, np.random.default_rng(seeds[i, j]))
            records.append(PositionRecord(point=i, trial=j, px_true=ue.px, py_true=ue.py, px_hat=px, py_hat=py))
        result.records.extend(records)
        if on_point is not None:
            on_point(i, records)
        logger.info(f"Trajectory point {i}: RMSE {result.point_rmse(i):.4f} m over {setup.trials} trials")
    return result


def read_trajectory(path: Union[str, Path], geom: DeploymentGeometry) -> List[UePosition]:
    """UE positions from a ``px_m, py_m`` CSV, placed ``geom.ue_height`` below the ceiling"""
    data = read_columns(path, TRAJECTORY_COLUMNS)
    if data.shape[0] == 0:
        raise InvalidInputError(f"{path}: trajectory has no points")
    return [geom.ue(float(px), float(py)) for px, py in data]
