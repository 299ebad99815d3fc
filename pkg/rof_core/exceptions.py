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
Exception hierarchy for rof_core and rof_harness.

Every error raised on purpose by the library derives from RofError and from the
closest builtin, so callers can catch either ``RofError`` or e.g. ``ValueError``.
"""

from typing import Optional, Sequence


class RofError(Exception):
    """Base class for all library errors"""


class InvalidInputError(RofError, ValueError):
    """An argument violates an operation's precondition"""


class OutOfRangeError(InvalidInputError):
    """A requested range is not covered by the available data"""


class InvalidStateError(RofError, RuntimeError):
    """An object lacks the state an operation needs (e.g. missing taps)"""


class WrongRegimeError(RofError, ValueError):
    """The operation does not apply to the PA / fiber regime it was given"""


class RegimeViolationError(WrongRegimeError):
    """Selective-fiber formulas evaluated at the flat compensation point b_k = 1"""


class DegenerateModelError(RofError, ArithmeticError):
    """The signal model collapses (zero regressor, singular system)"""


class DegenerateNoiseError(DegenerateModelError):
    """A noise variance is zero where whitening needs it positive"""


class DegenerateGeometryError(DegenerateModelError):
    """The positioning objective carries no information about the position"""


class OptimizationFailure(RofError, RuntimeError):
    """
    An objective returned a non-finite value during optimisation.

    Attributes:
        theta: Parameter vector at which the objective failed
        value: The offending objective value
    """

    def __init__(self, message: str, theta: Optional[Sequence[float]] = None, value: Optional[float] = None):
        super().__init__(message)
        self.theta = None if theta is None else [float(t) for t in theta]
        self.value = value


class ScenarioError(InvalidInputError):
    """Scenario document could not be loaded"""


class ScenarioParseError(ScenarioError):
    """Scenario document is not valid TOML"""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ScenarioValidationError(ScenarioError):
    """Scenario document parsed but violates an invariant"""

    def __init__(self, message: str, key: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class RunAbortedError(RofError, RuntimeError):
    """Too many Monte Carlo trials failed at one sweep point"""
