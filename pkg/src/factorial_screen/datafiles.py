# Copyright (c) 2023, Semiotic AI, Inc.  All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""CSV interchange of factorial datasets.

Files have a header ``y,z1,...,zK`` and one row per unit; the ``z`` columns
hold 0/1 factor levels.
"""

import logging
import math
from pathlib import Path
from typing import IO, List, Union

import numpy as np
import pandas as pd

from .design import TreatmentLevel, check_factor_count
from .errors import InputError
from .estimation import FactorialDataset

logger = logging.getLogger(__name__)

PathOrBuffer = Union[str, Path, IO[str]]


def expected_header(n_factors: int) -> List[str]:
    return ["y"] + [f"z{k}" for k in range(1, n_factors + 1)]


def _check_header(columns: List[str]) -> int:
    n_factors = len(columns) - 1
    if n_factors < 1 or columns != expected_header(n_factors):
        raise InputError(
            f"Unexpected header {','.join(columns)!r}, expected 'y,z1,...,zK' "
            f"with consecutive factor columns"
        )
    return check_factor_count(n_factors)


def _cell(value, line: int, column: str) -> str:
    if not isinstance(value, str):
        raise InputError(f"line {line}, column {column}: missing value")
    return value.strip()


def _parse_outcome(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError as err:
        raise InputError(f"line {line}, column y: {text!r} is not a number") from err
    if not math.isfinite(value):
        raise InputError(f"line {line}, column y: outcome must be finite, got {text!r}")
    return value


def parse_dataset(source: PathOrBuffer) -> FactorialDataset:
    """Read a factorial dataset from CSV.

    K is inferred from the header. Rows with the same factor levels are
    aggregated into one arm by the dataset summary.

    Args:
        source (PathOrBuffer): path or open text stream

    Raises:
        InputError: unreadable file, bad header, non-binary factor level or
            non-finite outcome; messages carry the line and column.

    Returns:
        FactorialDataset: the observed units
    """

    try:
        frame = pd.read_csv(
            source, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except (
        OSError,
        UnicodeDecodeError,
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
    ) as err:
        raise InputError(f"Cannot read dataset: {err}") from err

    columns = [str(column).strip() for column in frame.columns]
    n_factors = _check_header(columns)
    frame.columns = columns

    outcomes = np.empty(len(frame))
    rows = np.empty(len(frame), dtype=np.int64)
    for index, record in enumerate(frame.itertuples(index=False, name=None)):
        line = index + 2
        outcomes[index] = _parse_outcome(_cell(record[0], line, "y"), line)
        bits = []
        for k, text in enumerate(record[1:], start=1):
            text = _cell(text, line, f"z{k}")
            if text not in ("0", "1"):
                raise InputError(
                    f"line {line}, column z{k}: expected 0 or 1, got {text!r}"
                )
            bits.append(int(text))
        rows[index] = TreatmentLevel.from_bits(bits).row(n_factors)

    logger.info("read %d units with K=%d", len(frame), n_factors)
    return FactorialDataset(n_factors, rows, outcomes)


def dataset_frame(dataset: FactorialDataset) -> pd.DataFrame:
    """One row per unit with columns ``y, z1, ..., zK``."""

    treatments = dataset.treatments
    frame = pd.DataFrame({"y": dataset.outcomes})
    for k in range(1, dataset.n_factors + 1):
        frame[f"z{k}"] = [treatment.bit(k) for treatment in treatments]
    return frame


def write_dataset(dataset: FactorialDataset, target: PathOrBuffer):
    """Write a dataset in the format read by :func:`parse_dataset`."""

    dataset_frame(dataset).to_csv(target, index=False, lineterminator="\n")
