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
Turns exceptions into flat dicts for failed-trial records.

Dumpers are looked up along the exception's MRO, most generic first, so a
specific dumper can add keys on top of the generic ones.
"""

from typing import Dict, Protocol, Union


class Dumper(Protocol):
    register_for: Union[str, type]

    @staticmethod
    def dump(ex: BaseException) -> Dict[str, object]: ...


def _dotted(target: Union[str, type]) -> str:
    return target if isinstance(target, str) else f"{target.__module__}.{target.__name__}"


class ExceptionsDumpers:
    """Dumpers keyed by the dotted name of the exception class they handle"""

    def __init__(self):
        self._by_class: Dict[str, Dumper] = {}

    def set(self, dumper: Dumper):
        self._by_class[_dotted(dumper.register_for)] = dumper

    def dump(self, ex: BaseException) -> Dict[str, object]:
        record: Dict[str, object] = {}
        for cls in reversed(type(ex).__mro__):
            dumper = self._by_class.get(_dotted(cls))
            if dumper is not None:
                record.update(dumper.dump(ex))
        return record


class ExceptionDumperBase:

    register_for = "builtins.Exception"

    @staticmethod
    def dump(ex):
        return {"error": type(ex).__name__, "message": str(ex)}


class OptimizationFailureDumper:

    register_for = "rof_core.exceptions.OptimizationFailure"

    @staticmethod
    def dump(ex):
        return {
            "theta": ";".join(f"{t:.12g}" for t in ex.theta or []),
            "value": repr(ex.value),
        }


class ScenarioValidationErrorDumper:

    register_for = "rof_core.exceptions.ScenarioValidationError"

    @staticmethod
    def dump(ex):
        return {"key": ex.key}


class ScenarioParseErrorDumper:

    register_for = "rof_core.exceptions.ScenarioParseError"

    @staticmethod
    def dump(ex):
        return {"line": ex.line, "column": ex.column}


def create_default_dumpers() -> ExceptionsDumpers:
    """Registry with every dumper of this module registered"""
    dumpers = ExceptionsDumpers()
    for dumper in (
        ExceptionDumperBase,
        OptimizationFailureDumper,
        ScenarioValidationErrorDumper,
        ScenarioParseErrorDumper,
    ):
        dumpers.set(dumper)
    return dumpers
