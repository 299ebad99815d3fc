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
Result files.

Tables are CSV with a ``# key=value`` comment header and are written to a
temporary file in the target directory, then renamed over the target. Floats
are written with repr so bodies are byte-stable for a given run. Wall-clock
timestamps go only to the sidecar ``<out>.log``.
"""

import csv
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Mapping, Union

import numpy as np

from rof_core.exceptions import InvalidInputError
from rof_core.fiber_channel import read_columns

logger = logging.getLogger(__name__)

SIDECAR_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

SPECTRUM_COLUMNS = ["re", "im"]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_table(path: Union[str, Path], header: Mapping[str, object], columns: List[str],
                rows: Iterable[Iterable]) -> Path:
    """Write ``rows`` under ``columns`` atomically; returns the path written"""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            for key, value in header.items():
                fh.write(f"# {key}={_cell(value)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            writer.writerows([[_cell(v) for v in row] for row in rows])
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.info(f"Wrote {path}")
    return path


def read_table(path: Union[str, Path]):
    """(header dict, column names, rows of strings) of a file written by write_table"""
    header, lines = {}, []
    with Path(path).open(newline="") as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition("=")
                header[key] = value
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return header, rows[0], rows[1:]


def sidecar_path(out: Union[str, Path], suffix: str) -> Path:
    out = Path(out)
    return out.with_name(out.name + suffix)


def attach_sidecar_log(out: Union[str, Path], level: int = logging.INFO) -> logging.Handler:
    """Timestamped log next to ``out``; the caller removes the handler when done"""
    handler = logging.FileHandler(sidecar_path(out, ".log"), mode="w")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(SIDECAR_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def read_spectrum(path: Union[str, Path]) -> np.ndarray:
    """Complex samples from a ``re, im`` CSV"""
    data = read_columns(path, SPECTRUM_COLUMNS)
    if data.shape[0] == 0:
        raise InvalidInputError(f"{path}: no samples")
    return data[:, 0] + 1j * data[:, 1]


def write_spectrum(path: Union[str, Path], samples, header: Mapping[str, object]) -> Path:
    samples = np.asarray(samples, dtype=complex)
    return write_table(path, header, SPECTRUM_COLUMNS, np.column_stack([samples.real, samples.imag]))
