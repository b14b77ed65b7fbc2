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

from factorial_screen.best_arm import AUTO_ETA
from factorial_screen.errors import InputError
from factorial_screen.tools import TargetSpec, parse_targets


@pytest.mark.parametrize(
    "text,expected",
    [
        ("arm:101", TargetSpec("arm", arm="101")),
        ("contrast:1,2", TargetSpec("contrast", factors=(1, 2))),
        ("effect:3", TargetSpec("effect", factors=(3,))),
        ("effect:", TargetSpec("effect")),
        ("custom:0,0.5,0,0.5", TargetSpec("custom", values=(0.0, 0.5, 0.0, 0.5))),
        ("best_arm", TargetSpec("best_arm")),
        ("best_arm:K0=2", TargetSpec("best_arm", max_active=2)),
        ("best_arm:K0=1,eta=0.25", TargetSpec("best_arm", max_active=1, eta=0.25)),
        (" best_arm:eta=auto ", TargetSpec("best_arm", eta=AUTO_ETA)),
    ],
)
def test_parse(text: str, expected: TargetSpec):
    assert TargetSpec.parse(text) == expected


@pytest.mark.parametrize(
    "text",
    [
        "arm:101",
        "contrast:1,2",
        "effect:3",
        "custom:0,0.5",
        "best_arm",
        "best_arm:K0=1,eta=0.25",
    ],
)
def test_label_round_trip(text: str):
    assert TargetSpec.parse(text).label == text


@pytest.mark.parametrize(
    "text",
    [
        "arm:12",
        "arm:",
        "contrast:a",
        "contrast:0",
        "custom:1,x",
        "best_arm:K1=2",
        "best_arm:K0",
        "best_arm:eta=fast",
        "quantile:0.5",
    ],
)
def test_parse_rejects(text: str):
    with pytest.raises(InputError):
        TargetSpec.parse(text)


def test_weights():
    assert TargetSpec.parse("arm:01").weight(2).tolist() == [0.0, 1.0, 0.0, 0.0]
    assert TargetSpec.parse("contrast:1").weight(2).tolist() == [-1.0, -1.0, 1.0, 1.0]
    assert TargetSpec.parse("effect:1").weight(2).tolist() == [-0.25, -0.25, 0.25, 0.25]
    assert TargetSpec.parse("effect:").weight(2).tolist() == [0.25] * 4
    custom = TargetSpec.parse("custom:1,0,0,2").weight(2)
    assert np.array_equal(custom, [1.0, 0.0, 0.0, 2.0])


@pytest.mark.parametrize("text", ["arm:011", "contrast:3", "custom:1,2,3", "best_arm"])
def test_weights_reject(text: str):
    with pytest.raises(InputError):
        TargetSpec.parse(text).weight(2)


def test_best_arm_config_defaults_to_all_arms():
    config = TargetSpec.parse("best_arm").best_arm_config(3, 0.1)

    assert config.max_active == 3
    assert config.eta == AUTO_ETA
    assert config.alpha_ci == 0.1


def test_parse_targets():
    targets = parse_targets(["arm:1", "best_arm"])

    assert [target.kind for target in targets] == ["arm", "best_arm"]
    assert parse_targets([]) == []


def test_unknown_kind():
    with pytest.raises(InputError):
        TargetSpec("median")
