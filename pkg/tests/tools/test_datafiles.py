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

import io

import numpy as np
import pytest

from factorial_screen.datafiles import dataset_frame, parse_dataset, write_dataset
from factorial_screen.errors import InputError
from factorial_screen.estimation import FactorialDataset


def test_parse_dataset():
    text = """\
y,z1,z2
1.5,0,1
2.5,0,1
-1.0,1,0
0.0,1,1
4.0,0,0
"""
    dataset = parse_dataset(io.StringIO(text))

    assert dataset.n_factors == 2
    assert dataset.n_units == 5
    # r(z) reads z1 as the most significant digit
    assert dataset.rows.tolist() == [1, 1, 2, 3, 0]
    assert dataset.summary.counts.tolist() == [1, 2, 1, 1]
    assert dataset.summary.means.tolist() == [4.0, 2.0, -1.0, 0.0]


def test_parse_dataset_tolerates_spaces():
    dataset = parse_dataset(io.StringIO("y, z1, z2, z3\n1e-1, 1, 0, 1\n"))

    assert dataset.n_factors == 3
    assert dataset.outcomes.tolist() == [0.1]
    assert dataset.treatments[0].to_string(3) == "101"


def test_parse_dataset_header_only():
    dataset = parse_dataset(io.StringIO("y,z1\n"))

    assert dataset.n_factors == 1
    assert dataset.n_units == 0


@pytest.mark.parametrize(
    "text,message",
    [
        ("y,z2,z1\n1,0,1\n", "Unexpected header"),
        ("y\n1\n", "Unexpected header"),
        ("outcome,z1\n1,0\n", "Unexpected header"),
        ("y,z1,z2\n1,0,1\n2,0,2\n", "line 3, column z2: expected 0 or 1, got '2'"),
        ("y,z1,z2\n1,0,1\n2,1,true\n", "line 3, column z2"),
        ("y,z1\nnan,0\n", "line 2, column y: outcome must be finite"),
        ("y,z1\ninf,1\n", "line 2, column y: outcome must be finite"),
        ("y,z1\nabc,1\n", "line 2, column y: 'abc' is not a number"),
        ("y,z1,z2\n1,0,\n", "line 2, column z2"),
        ("", "Cannot read dataset"),
    ],
)
def test_parse_dataset_rejects(text: str, message: str):
    with pytest.raises(InputError, match=message):
        parse_dataset(io.StringIO(text))


def test_parse_dataset_missing_file(tmp_path):
    with pytest.raises(InputError, match="Cannot read dataset"):
        parse_dataset(tmp_path / "missing.csv")


def test_parse_dataset_invalid_encoding(tmp_path):
    path = tmp_path / "units.csv"
    path.write_bytes(b"y,z1\n1.0,0\n\xff\xfe,1\n")

    with pytest.raises(InputError, match="Cannot read dataset"):
        parse_dataset(path)


def test_write_then_parse(tmp_path, rng: np.random.Generator, dataset_factory):
    dataset = dataset_factory(rng, 3)
    path = tmp_path / "units.csv"

    write_dataset(dataset, path)
    parsed = parse_dataset(path)

    assert path.read_text(encoding="utf-8").splitlines()[0] == "y,z1,z2,z3"
    assert np.array_equal(parsed.rows, dataset.rows)
    assert np.array_equal(parsed.outcomes, dataset.outcomes)


def test_dataset_frame():
    dataset = FactorialDataset(2, [2, 1], [0.5, 1.5])

    frame = dataset_frame(dataset)

    assert list(frame.columns) == ["y", "z1", "z2"]
    assert frame.to_dict("list") == {"y": [0.5, 1.5], "z1": [1, 0], "z2": [0, 1]}
