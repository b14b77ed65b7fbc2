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

import math

import numpy as np
import pytest

from factorial_screen.design import FactorSet, WorkingModel, effect_transform
from factorial_screen.errors import EnumerationTooLargeError, InputError
from factorial_screen.simulation import (
    DesignSpec,
    ScienceTable,
    assign,
    assignment_count,
    enumerate_assignments,
    gen_science_table,
    mu_from_effects,
    reveal,
    structured_effects,
)


@pytest.mark.parametrize(
    "effects, n_factors, expected",
    [
        ({(1,): 1.0}, 1, [-1.0, 1.0]),
        ({(1, 2): 1.0}, 2, [1.0, -1.0, -1.0, 1.0]),
        ({(): 2.0}, 2, [2.0, 2.0, 2.0, 2.0]),
        ({(2,): 0.5, (): 1.0}, 2, [0.5, 1.5, 0.5, 1.5]),
    ],
)
def test_mu_from_effects(effects, n_factors, expected):
    mapping = {
        FactorSet.from_factors(factors): value for factors, value in effects.items()
    }

    assert mu_from_effects(mapping, n_factors) == pytest.approx(expected, abs=1e-15)


def test_structured_effects():
    effects = structured_effects(8, 0.4, active=5, max_level=2)

    assert len(effects) == 15
    assert set(effects.values()) == {0.4}
    assert all(s.level <= 2 and max(s.factors) <= 5 for s in effects)

    mu = mu_from_effects(effects, 8)
    tau = effect_transform(mu, WorkingModel(effects), 8)
    assert tau[1:] == pytest.approx([0.4] * 15, abs=1e-12)


def test_constant_science_table():
    mu = np.array([0.0, 1.0, 2.0, 3.0])
    science = gen_science_table(mu, 5, np.random.default_rng(0), dgp="constant")

    assert np.array_equal(science.outcomes, np.tile(mu, (5, 1)))
    assert np.allclose(science.covariance, 0.0)
    assert science.means.tolist() == mu.tolist()


def test_true_model_from_mu():
    mu = mu_from_effects({FactorSet.from_factors([1]): 0.4}, 3)
    science = gen_science_table(mu, 10, np.random.default_rng(0), dgp="normal")

    assert science.true_model() == WorkingModel([FactorSet.from_factors([1])])
    assert ScienceTable(science.outcomes).true_model() == WorkingModel.full(3)


def test_science_table_means_converge():
    mu = np.array([1.0, -1.0, 0.5, 2.0])
    rng = np.random.default_rng(5)

    science = gen_science_table(mu, 20000, rng, dgp="shifted_exponential")

    assert science.means == pytest.approx(mu, abs=0.05)
    assert np.diag(science.covariance) == pytest.approx(np.ones(4), abs=0.1)


def test_science_table_deterministic():
    mu = np.zeros(8)
    first = gen_science_table(mu, 4, np.random.default_rng(3), dgp="normal")
    second = gen_science_table(mu, 4, np.random.default_rng(3), dgp="normal")

    assert np.array_equal(first.outcomes, second.outcomes)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_units=0), dict(dgp="cauchy"), dict(mu=np.zeros(3))],
)
def test_science_table_rejects(kwargs):
    arguments = {"mu": np.zeros(4), "n_units": 3, "dgp": "normal", **kwargs}
    with pytest.raises(InputError):
        gen_science_table(rng=np.random.default_rng(0), **arguments)


def test_science_table_covariance_needs_two_units():
    with pytest.raises(InputError):
        ScienceTable(np.zeros((1, 4))).covariance


@pytest.mark.parametrize("counts", [(1, 1, 1), (1, -1), (0, 0)])
def test_design_rejects(counts):
    with pytest.raises(InputError):
        DesignSpec(counts)


def test_assign_counts():
    design = DesignSpec((3, 1, 0, 2))
    rows = assign(design, np.random.default_rng(1), n_units=6)

    assert np.bincount(rows, minlength=4).tolist() == [3, 1, 0, 2]


def test_assign_checks_unit_count():
    with pytest.raises(InputError):
        assign(DesignSpec.uniform(2, 2), np.random.default_rng(1), n_units=7)


def test_assign_uniform():
    design = DesignSpec((2, 1, 1, 0))
    rng = np.random.default_rng(2)
    draws = 12000

    seen = {}
    for _ in range(draws):
        key = tuple(assign(design, rng))
        seen[key] = seen.get(key, 0) + 1

    assert len(seen) == assignment_count(design.counts) == 12
    expected = draws / 12
    tolerance = 4 * math.sqrt(draws * (1 / 12) * (11 / 12))
    assert all(abs(count - expected) <= tolerance for count in seen.values())


def test_reveal():
    science = ScienceTable(np.arange(8.0).reshape(4, 2))

    dataset = reveal(science, [1, 0, 0, 1])

    assert dataset.outcomes.tolist() == [1.0, 2.0, 4.0, 7.0]
    assert dataset.rows.tolist() == [1, 0, 0, 1]


def test_reveal_rejects_length():
    with pytest.raises(InputError):
        reveal(ScienceTable(np.zeros((4, 2))), [0, 1])


def test_assignment_count():
    assert assignment_count((2, 2, 2, 2)) == 2520
    assert assignment_count((3, 0)) == 1


def test_exact_design_identities():
    design = DesignSpec.uniform(2, 2)
    science = gen_science_table(
        np.array([0.5, -1.0, 2.0, 0.0]), 8, np.random.default_rng(17), dgp="normal"
    )
    models = [
        WorkingModel(),
        WorkingModel.from_list([[], [1], [2]]),
        WorkingModel.full(2),
    ]

    moments = enumerate_assignments(science, design, models)

    assert moments.n_assignments == 2520
    assert np.max(np.abs(moments.mean - science.means)) < 1e-12
    covariance = science.sampling_covariance(design)
    vhat = np.diag(science.design_covariance(design))
    assert np.max(np.abs(moments.covariance - covariance)) < 1e-12
    assert np.max(np.abs(moments.vhat_mean - vhat)) < 1e-12
    for model in models:
        expected = effect_transform(science.means, model, 2)
        assert np.max(np.abs(moments.effect_means[model] - expected)) < 1e-12


def test_enumeration_too_large():
    design = DesignSpec.uniform(2, 8)
    science = ScienceTable(np.zeros((32, 4)))

    with pytest.raises(EnumerationTooLargeError):
        enumerate_assignments(science, design)


def test_enumeration_needs_every_arm():
    with pytest.raises(InputError):
        enumerate_assignments(ScienceTable(np.zeros((3, 4))), DesignSpec((1, 1, 1, 0)))
