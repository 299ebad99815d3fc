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
Scenario documents.

A scenario is a TOML document with nested sections, validated strictly:
unknown keys are errors. Example::

    name = "sigma2-sweep"
    seed = 7
    trials = 200

    [grid]
    center_hz = 140e9
    bandwidth_hz = 1e9
    bins = 64

    [fiber]
    kind = "selective"

    [chain]
    stages = 3
    gain_db = 0.0

    [link]
    amplitude = 1.0
    tau = 12e-9

    [estimator]
    kind = "ml"
    r_range = [0.0, 5.0]
    tau_range = [0.0, 40e-9]

    [sweep]
    axis = "sigma2"
    sigma2 = [1e-3, 1e-2, 1e-1]
"""

import hashlib
import logging
from functools import cached_property
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from rof_core.exceptions import ScenarioError, ScenarioParseError, ScenarioValidationError
from rof_core.fiber_channel import (
    FrequencyGrid,
    RawMeasurement,
    SelectiveShape,
    SyntheticFiberSpec,
    UnitFiberResponse,
    build_unit_response,
    read_measurement,
    smooth_measurement,
    synth_fiber,
)
from rof_core.positioning import DeploymentGeometry, TrajectorySetup
from rof_core.rof_signal import ChainParams, PaParams, PathlossParams, WirelessLink

logger = logging.getLogger(__name__)

SweepAxis = Literal["sigma2", "amplitude", "bandwidth"]


def _resolve_path(value: Path | None, info: ValidationInfo) -> Path | None:
    # relative paths are taken from the scenario file's directory
    if value is None:
        return None
    base_dir = (info.context or {}).get("base_dir")
    if not value.is_absolute() and base_dir is not None:
        value = Path(base_dir) / value
    value = value.resolve()
    if not value.is_file():
        raise ValueError(f"file not found: {value}")
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)


class GridSection(_Section):
    center_hz: float = Field(gt=0)
    bandwidth_hz: float = Field(gt=0)
    bins: int = Field(ge=2)


class FiberSection(_Section):
    kind: Literal["flat", "selective", "measured"] = "selective"
    # E = sum |H_k|^2; defaults to the bin count
    total_energy: float | None = Field(default=None, gt=0)
    depth: float = Field(default=0.5, ge=0, lt=1)
    cycles: float = 1.0
    offset: float = 0.0
    delay_samples: float = 0.0
    measurement: Path | None = None
    smoothing_window: int = Field(default=300, ge=1)

    @field_validator("measurement", mode="after")
    @classmethod
    def resolve_measurement(cls, value: Path | None, info: ValidationInfo) -> Path | None:
        return _resolve_path(value, info)

    @model_validator(mode="after")
    def check_measurement_source(self) -> "FiberSection":
        if self.kind == "measured" and self.measurement is None:
            raise ValueError("kind 'measured' needs a measurement file")
        return self


class ChainSection(_Section):
    stages: float = Field(ge=0)
    noise_var: float = Field(default=1e-3, ge=0)
    # None compensates the peak fiber loss, G |H|max = 1
    gain_db: float | None = None
    nonlin: float = 0.0
    oversample: int | None = Field(default=None, ge=1)


class LinkSection(_Section):
    amplitude: float = Field(default=1.0, ge=0)
    phase: float = 0.0
    tau: float | None = None
    clock_offset: float = 0.0
    distance: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_delay_source(self) -> "LinkSection":
        if self.tau is None and self.distance is None:
            raise ValueError("either tau or distance is required")
        return self


class PathlossSection(_Section):
    tx_gain: float = Field(default=1.0, gt=0)
    rx_gain: float = Field(default=1.0, gt=0)
    wavelength: float = Field(default=1.0, gt=0)
    shadow_sigma_db: float = Field(default=2.0, ge=0)


class EstimatorSection(_Section):
    kind: Literal["ml", "pso"] = "ml"
    # None follows the fiber: flat for flat fibers, selective otherwise
    regime: Literal["flat", "selective"] | None = None
    r_range: Tuple[float, float] = (0.0, 5.0)
    r_step: float = Field(default=0.1, gt=0)
    tau_range: Tuple[float, float] = (0.0, 40e-9)
    # None is 1/(8 B)
    tau_step: float | None = Field(default=None, gt=0)
    flat_log_term: Literal["compact", "exact"] = "exact"
    amplitude_max: float | None = Field(default=None, gt=0)
    iterations: int | None = Field(default=None, ge=1)
    particles: int | None = Field(default=None, ge=1)
    w_personal: float | None = None
    w_global: float | None = None
    inertia: float | None = None
    inertia_decay: float | None = Field(default=None, gt=0, le=1)

    @model_validator(mode="after")
    def check_ranges(self) -> "EstimatorSection":
        if not self.r_range[0] < self.r_range[1]:
            raise ValueError("r_range must satisfy min < max")
        if not self.tau_range[0] < self.tau_range[1]:
            raise ValueError("tau_range must satisfy min < max")
        if self.r_range[0] < 0:
            raise ValueError("r_range must be non-negative")
        return self

    def pso_overrides(self) -> dict:
        names = ("iterations", "particles", "w_personal", "w_global", "inertia", "inertia_decay")
        return {name: getattr(self, name) for name in names if getattr(self, name) is not None}


class SweepSection(_Section):
    axis: SweepAxis = "sigma2"
    sigma2: List[float] | None = None
    amplitude: List[float] | None = None
    bandwidth: List[float] | None = None

    @field_validator("sigma2", "amplitude", mode="after")
    @classmethod
    def check_non_negative(cls, values: List[float] | None) -> List[float] | None:
        if values is not None and any(v < 0 for v in values):
            raise ValueError("sweep values must be non-negative")
        return values

    @field_validator("bandwidth", mode="after")
    @classmethod
    def check_positive(cls, values: List[float] | None) -> List[float] | None:
        if values is not None and any(v <= 0 for v in values):
            raise ValueError("bandwidth values must be positive")
        return values

    @model_validator(mode="after")
    def check_axis_values(self) -> "SweepSection":
        values = getattr(self, self.axis)
        if not values:
            raise ValueError(f"sweep axis '{self.axis}' has no values")
        return self


class PositioningSection(_Section):
    spacing: float = Field(default=1.0, gt=0)
    rofs: int = Field(default=3, ge=3)
    rus_per_rof: int = Field(default=5, ge=2)
    ue_height: float = 1.5
    stagger: float = 0.0
    clock_offset: float = 0.0
    tau_range: Tuple[float, float] = (0.0, 20e-9)
    trajectory: Path | None = None

    @field_validator("trajectory", mode="after")
    @classmethod
    def resolve_trajectory(cls, value: Path | None, info: ValidationInfo) -> Path | None:
        return _resolve_path(value, info)


class Scenario(_Section):
    name: str = "scenario"
    seed: int = Field(ge=0, lt=2 ** 63)
    trials: int = Field(ge=1)
    workers: int | None = Field(default=None, ge=1)
    grid: GridSection
    fiber: FiberSection = FiberSection()
    chain: ChainSection
    link: LinkSection
    pathloss: PathlossSection | None = None
    estimator: EstimatorSection = EstimatorSection()
    sweep: SweepSection | None = None
    positioning: PositioningSection | None = None

    @model_validator(mode="after")
    def check_estimator_regime(self) -> "Scenario":
        if self.estimator.kind == "ml" and self.chain.nonlin != 0:
            raise ValueError("the ML estimator assumes linear PAs; use estimator.kind = 'pso' when chain.nonlin != 0")
        if self.estimator.kind == "pso" and int(self.chain.stages) != self.chain.stages:
            raise ValueError("the time-domain cascade needs an integer chain.stages")
        return self

    @property
    def regime(self) -> str:
        if self.estimator.regime is not None:
            return self.estimator.regime
        return "flat" if self.fiber.kind == "flat" else "selective"

    # sweep

    def sweep_axis(self, override: Optional[str] = None) -> str:
        if override is not None:
            return override
        return "sigma2" if self.sweep is None else self.sweep.axis

    def sweep_values(self, axis: Optional[str] = None) -> List[float]:
        """
        Values of ``axis`` (default: the scenario's own axis).

        Without a [sweep] section the single point is the scenario's own value.
        """
        axis = self.sweep_axis(axis)
        if axis not in ("sigma2", "amplitude", "bandwidth"):
            raise ScenarioValidationError(f"unknown sweep axis '{axis}'", key="sweep.axis")
        values = None if self.sweep is None else getattr(self.sweep, axis)
        if values:
            return list(values)
        if self.sweep is not None:
            raise ScenarioValidationError(f"no values for axis '{axis}'", key=f"sweep.{axis}")
        return [{"sigma2": self.chain.noise_var,
                 "amplitude": self.link.amplitude,
                 "bandwidth": self.grid.bandwidth_hz}[axis]]

    def at(self, axis: str, value: float) -> "Scenario":
        """Copy of the scenario with the swept quantity set to ``value``"""
        if axis == "sigma2":
            return self.model_copy(update={"chain": self.chain.model_copy(update={"noise_var": value})})
        if axis == "amplitude":
            return self.model_copy(update={"link": self.link.model_copy(update={"amplitude": value})})
        if axis == "bandwidth":
            return self.model_copy(update={"grid": self.grid.model_copy(update={"bandwidth_hz": value})})
        raise ScenarioValidationError(f"unknown sweep axis '{axis}'", key="sweep.axis")

    # model inputs

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid.centered(self.grid.center_hz, self.grid.bandwidth_hz, self.grid.bins)

    @cached_property
    def measurement(self) -> RawMeasurement | None:
        if self.fiber.measurement is None:
            return None
        raw = read_measurement(self.fiber.measurement)
        window = min(self.fiber.smoothing_window, raw.freqs.size)
        return smooth_measurement(raw, window)

    def synthetic_fiber(self, kind: Optional[str] = None) -> SyntheticFiberSpec:
        kind = kind or self.fiber.kind
        if kind == "measured":
            raise ScenarioValidationError("a measured fiber has no synthetic spec", key="fiber.kind")
        return SyntheticFiberSpec(
            kind=kind,
            total_energy=self.fiber.total_energy or float(self.grid.bins),
            shape_params=SelectiveShape(depth=self.fiber.depth, cycles=self.fiber.cycles, offset=self.fiber.offset),
            delay_samples=self.fiber.delay_samples,
        )

    def unit_fiber(self, grid: Optional[FrequencyGrid] = None) -> UnitFiberResponse:
        grid = grid or self.frequency_grid()
        if self.fiber.kind == "measured":
            return build_unit_response(self.measurement, grid)
        return synth_fiber(self.synthetic_fiber(), grid)

    def gain(self, unit: UnitFiberResponse) -> float:
        """Linear PA gain; without gain_db, 1 / max |H_k|"""
        if self.chain.gain_db is not None:
            return 10 ** (self.chain.gain_db / 20)
        return float(1 / np.max(unit.magnitude))

    def chain_params(self, unit: UnitFiberResponse) -> ChainParams:
        return ChainParams(
            stages=self.chain.stages,
            noise_var=self.chain.noise_var,
            pa=PaParams(gain=self.gain(unit), nonlin=self.chain.nonlin),
            fiber=unit,
        )

    def link_params(self, amplitude: Optional[float] = None) -> WirelessLink:
        link = self.link
        amplitude = link.amplitude if amplitude is None else amplitude
        if link.distance is not None:
            return WirelessLink.from_geometry(link.distance, link.clock_offset, amplitude, link.phase)
        return WirelessLink(amplitude=amplitude, phase=link.phase, tau=link.tau, clock_offset=link.clock_offset)

    def pathloss_params(self) -> PathlossParams | None:
        if self.pathloss is None:
            return None
        return PathlossParams(**self.pathloss.model_dump())

    def trajectory_setup(self) -> TrajectorySetup:
        if self.positioning is None:
            raise ScenarioValidationError("a [positioning] section is required", key="positioning")
        pos = self.positioning
        unit = self.unit_fiber()
        fiber: Union[SyntheticFiberSpec, UnitFiberResponse] = (
            unit if self.fiber.kind == "measured" else self.synthetic_fiber()
        )
        gain_db = self.chain.gain_db if self.chain.gain_db is not None else float(20 * np.log10(self.gain(unit)))
        return TrajectorySetup(
            geometry=DeploymentGeometry(
                spacing=pos.spacing,
                rofs=pos.rofs,
                rus_per_rof=pos.rus_per_rof,
                ue_height=pos.ue_height,
                stagger=pos.stagger,
            ),
            bins=self.grid.bins,
            center_hz=self.grid.center_hz,
            bandwidth=self.grid.bandwidth_hz,
            fiber=fiber,
            gain_db=gain_db,
            noise_var=self.chain.noise_var,
            amplitude=self.link.amplitude,
            pathloss=self.pathloss_params(),
            clock_offset=pos.clock_offset,
            trials=self.trials,
            tau_range=pos.tau_range,
        )


def _error_key(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<document>"


def parse_scenario(text: str, base_dir: Union[str, Path, None] = None, source: str = "<scenario>") -> Scenario:
    """
    Parse and validate a scenario document.

    Relative file paths inside the document are resolved against ``base_dir``.

    Raises:
        ScenarioParseError: not valid TOML; carries line and column
        ScenarioValidationError: an invariant fails; carries the dotted key
    """
    try:
        document = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise ScenarioParseError(f"{source}: {e.msg}", line=e.lineno, column=e.colno) from e
    try:
        return Scenario.model_validate(document, context={"base_dir": base_dir})
    except ValidationError as e:
        first = e.errors()[0]
        raise ScenarioValidationError(first["msg"], key=_error_key(first)) from e


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(f"{path}: cannot read ({e.strerror})") from e
    scenario = parse_scenario(text, base_dir=path.parent, source=str(path))
    logger.info(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    """Canonical TOML text; loading it again gives an equal Scenario"""
    return toml.dumps(scenario.model_dump(mode="json", exclude_none=True))


def scenario_hash(scenario: Scenario) -> str:
    return hashlib.sha256(dump_scenario(scenario).encode()).hexdigest()
