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

import numpy as np
import pytest

from factorial_screen.design import (
    FactorSet,
    TreatmentLevel,
    WorkingModel,
    contrast_columns,
    contrast_matrix,
    contrast_value,
    contrast_vector,
)
from factorial_screen.errors import InputError


def test_worked_example_row():
    matrix = contrast_matrix(3)

    row = matrix.row(TreatmentLevel.from_string("101"))

    assert row.tolist() == [1, 1, -1, 1, -1, 1, -1, -1]


@pytest.mark.parametrize("n_factors", range(1, 9))
def test_gram_is_exact(n_factors: int):
    gram = contrast_matrix(n_factors).gram()

    n_arms = 1 << n_factors
    assert np.array_equal(gram, n_arms * np.eye(n_arms, dtype=np.int64))


@pytest.mark.parametrize("n_factors", [9, 10, 11, 12])
def test_gram_large(n_factors: int):
    entries = contrast_matrix(n_factors).entries.astype(np.float64)
    n_arms = 1 << n_factors

    np.testing.assert_allclose(
        entries.T @ entries, n_arms * np.eye(n_arms), rtol=0, atol=1e-12
    )


def test_contrast_value_matches_matrix():
    matrix = contrast_matrix(3)

    for mask in range(8):
        for z in range(8):
            treatment = TreatmentLevel(z)
            position = list(WorkingModel.full(3)).index(FactorSet(mask))
            expected = matrix.row(treatment)[position]
            assert contrast_value(FactorSet(mask), treatment) == expected


@pytest.mark.parametrize(
    "factors,arm,expected",
    [
        ([], "000", 1),
        ([1], "101", 1),
        ([2], "101", -1),
        ([1, 2], "101", -1),
        ([1, 2, 3], "000", -1),
        ([1, 2, 3], "111", 1),
    ],
)
def test_contrast_value(factors, arm, expected):
    treatment = TreatmentLevel.from_string(arm)
    assert contrast_value(FactorSet.from_factors(factors), treatment) == expected


def test_columns_agree_with_dense_matrix():
    model = WorkingModel.from_list([[1], [2, 3], [1, 2, 3]])
    dense = contrast_matrix(3)

    np.testing.assert_array_equal(contrast_columns(model, 3), dense.columns(model))
    np.testing.assert_array_equal(
        contrast_vector(FactorSet.from_factors([2, 3]), 3),
        dense.column(FactorSet.from_factors([2, 3])),
    )


def test_main_effect_column():
    # g_1(z) = 2 z_1 - 1 and z_1 is the most significant digit of r(z)
    column = contrast_vector(FactorSet.from_factors([1]), 2)

    assert column.tolist() == [-1.0, -1.0, 1.0, 1.0]


@pytest.mark.parametrize("n_factors", [0, 17, 2.0, True])
def test_contrast_matrix_rejects_factor_count(n_factors):
    with pytest.raises(InputError):
        contrast_matrix(n_factors)


def test_column_beyond_factor_count():
    with pytest.raises(InputError):
        contrast_vector(FactorSet.from_factors([4]), 3)
