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

import json

import pytest

from factorial_screen.cli import main

STUDY = """\
n_factors: 3
n0_grid: [2]
effect_sizes: [0.0, 1.0]
replications: 3
active: 2
dgp: normal
methods: [forward-bonferroni, naive-lasso]
"""


@pytest.fixture
def units(tmp_path):
    """A K=3 experiment written by ``generate``, with its truth file."""

    path = tmp_path / "units.csv"
    truth = tmp_path / "truth.json"
    code = main(
        [
            "generate",
            "-K",
            "3",
            "--n0",
            "4",
            "--active",
            "2",
            "--effect-size",
            "2.0",
            "--noise-scale",
            "0.1",
            "--dgp",
            "normal",
            "--seed",
            "31",
            "-o",
            str(path),
            "--truth",
            str(truth),
        ]
    )
    assert code == 0
    return path, truth


def test_generate(units):
    path, truth = units

    lines = path.read_text(encoding="utf-8").splitlines()
    record = json.loads(truth.read_text(encoding="utf-8"))

    assert lines[0] == "y,z1,z2,z3"
    assert len(lines) == 1 + 4 * 8
    assert record["seed"] == 31
    assert record["true_model"] == [[], [1], [2], [1, 2]]
    assert len(record["means"]) == 8


def test_generate_is_reproducible(tmp_path):
    outputs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for output in outputs:
        arguments = ["generate", "-K", "2", "--active", "2", "--seed", "4"]
        assert main([*arguments, "-o", str(output)]) == 0

    assert outputs[0].read_bytes() == outputs[1].read_bytes()


def test_generate_with_few_factors(tmp_path):
    output = tmp_path / "small.csv"
    truth = tmp_path / "small.json"

    code = main(
        ["generate", "-K", "3", "--seed", "9", "-o", str(output), "--truth", str(truth)]
    )

    assert code == 0
    record = json.loads(truth.read_text(encoding="utf-8"))
    # intercept plus the six effects of level one and two
    assert len(record["true_model"]) == 7


def test_analyze_json(tmp_path, units):
    path, _ = units
    output = tmp_path / "report.json"

    code = main(
        [
            "analyze",
            str(path),
            "--levels",
            "2",
            "--alpha",
            "0.001",
            "--target",
            "arm:111",
            "--target",
            "best_arm:K0=1",
            "--seed",
            "5",
            "-o",
            str(output),
        ]
    )
    report = json.loads(output.read_text(encoding="utf-8"))

    assert code == 0
    assert report["seed"] == 5
    assert report["model"] == [[], [1], [2], [1, 2]]
    assert {record["method"] for record in report["estimates"]} == {"plugin", "rls"}
    assert report["best_arm"][0]["target"] == "best_arm:K0=1"


def test_analyze_records_drawn_seed(tmp_path, units):
    path, _ = units
    output = tmp_path / "report.json"

    assert main(["analyze", str(path), "-o", str(output)]) == 0
    assert isinstance(json.loads(output.read_text(encoding="utf-8"))["seed"], int)


def test_analyze_csv(tmp_path, units):
    path, _ = units
    output = tmp_path / "estimates.csv"

    code = main(
        [
            "analyze",
            str(path),
            "--strategy",
            "under:1",
            "--s-step",
            "lasso",
            "--target",
            "effect:1",
            "--format",
            "csv",
            "-o",
            str(output),
        ]
    )
    lines = output.read_text(encoding="utf-8").splitlines()

    assert code == 0
    assert lines[0] == "target,method,gamma_hat,se,ci_lo,ci_hi,model,tie"
    assert [line.split(",")[1] for line in lines[1:]] == ["plugin", "rls_under"]


@pytest.mark.parametrize(
    "arguments",
    [
        ["--levels", "4"],
        ["--strategy", "sideways"],
        ["--alpha", "0.05,0.1,0.2"],
        ["--target", "arm:1111"],
        ["--heredity", "partial"],
        ["--no-such-option"],
    ],
)
def test_analyze_usage_errors(units, arguments):
    path, _ = units

    assert main(["analyze", str(path), *arguments]) == 2


def test_analyze_bad_dataset(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("y,z1,z2\n1.0,0,1\n2.0,0,2\n", encoding="utf-8")

    assert main(["analyze", str(path)]) == 2
    assert "line 3, column z2" in capsys.readouterr().err


def test_analyze_missing_file(tmp_path):
    assert main(["analyze", str(tmp_path / "missing.csv")]) == 2


def test_analyze_undecodable_dataset(tmp_path):
    path = tmp_path / "units.csv"
    path.write_bytes(b"y,z1\n1.0,0\n\xff\xfe,1\n")

    assert main(["analyze", str(path)]) == 2


def test_analyze_unreplicated_arm(tmp_path, capsys):
    path = tmp_path / "thin.csv"
    path.write_text("y,z1\n1.0,0\n2.0,0\n3.0,1\n", encoding="utf-8")

    assert main(["analyze", str(path), "--levels", "1"]) == 3
    assert "level 1" in capsys.readouterr().err


def test_simulate(tmp_path):
    config = tmp_path / "study.yaml"
    config.write_text(STUDY, encoding="utf-8")
    outputs = [tmp_path / "first.csv", tmp_path / "second.csv"]

    for output in outputs:
        assert main(["simulate", str(config), "--seed", "12", "-o", str(output)]) == 0

    assert outputs[0].read_bytes() == outputs[1].read_bytes()
    manifest_path = tmp_path / "first.csv.manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    assert manifest["seed"] == 12
    assert manifest["config"]["replications"] == 3
    header = outputs[0].read_text(encoding="utf-8").splitlines()[0]
    assert header == "n0,effect_size,method,estimator,metric,value,mc_se"


def test_simulate_explicit_manifest(tmp_path):
    config = tmp_path / "study.yaml"
    config.write_text(STUDY, encoding="utf-8")
    manifest = tmp_path / "run.json"

    code = main(
        [
            "simulate",
            str(config),
            "-j",
            "1",
            "-o",
            str(tmp_path / "metrics.csv"),
            "--manifest",
            str(manifest),
        ]
    )

    assert code == 0
    assert isinstance(json.loads(manifest.read_text(encoding="utf-8"))["seed"], int)


def test_simulate_bad_config(tmp_path, capsys):
    config = tmp_path / "study.yaml"
    config.write_text("n_factors: 3\nreplications: 0\nunknown: 1\n", encoding="utf-8")

    assert main(["simulate", str(config)]) == 2
    assert "unknown" in capsys.readouterr().err


def test_help():
    assert main(["--help"]) == 0
