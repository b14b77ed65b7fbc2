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

from factorial_screen.design import FactorSet, WorkingModel, canonical_masks
from factorial_screen.estimation import FactorialDataset


def make_dataset(rng: np.random.Generator, n_factors: int, low: int = 2, high: int = 5):
    """Random dataset with between ``low`` and ``high`` units per arm."""

    counts = rng.integers(low, high + 1, size=1 << n_factors)
    rows = np.repeat(np.arange(1 << n_factors), counts)
    outcomes = rng.normal(loc=rng.normal(size=rows.size), scale=1.0)
    return FactorialDataset(n_factors, rows, outcomes)


def random_model(rng: np.random.Generator, n_factors: int) -> WorkingModel:
    """Working model with a random subset of the non-intercept effects."""

    masks = canonical_masks(n_factors)[1:]
    size = rng.integers(0, masks.size + 1)
    chosen = rng.choice(masks, size, replace=False)
    return WorkingModel(FactorSet(int(mask)) for mask in chosen)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230417)


@pytest.fixture
def dataset_factory():
    return make_dataset


@pytest.fixture
def model_factory():
    return random_model
