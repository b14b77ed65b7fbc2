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
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .best_arm import AUTO_ETA, BestArmConfig, best_arm_estimate
from .design import FactorSet, TreatmentLevel, contrast_vector
from .errors import InputError
from .estimation import (
    FactorialDataset,
    as_weight_vector,
    orthogonality_gap,
    plug_in_estimate,
    rls_estimate,
)
from .datafiles import parse_dataset
from .misc import to_jsonable
from .screening import ScreeningConfig, Strategy, forward_screen

__all__ = [
    "AnalysisRequest",
    "TargetSpec",
    "analyze",
    "estimates_frame",
    "parse_targets",
    "run_analysis",
    "write_report",
]

logger = logging.getLogger(__name__)

SCHEMA = "factorial-screen/1"

TARGET_KINDS = ("arm", "contrast", "effect", "custom", "best_arm")

REPORT_FORMATS = ("json", "csv")

RLS_METHODS = {
    Strategy.FULL: "rls",
    Strategy.UNDER: "rls_under",
    Strategy.OVER: "rls_over",
}


def _split_numbers(text: str, convert, what: str) -> List:
    if not text.strip():
        return []
    try:
        return [convert(part) for part in text.split(",")]
    except ValueError as err:
        raise InputError(f"Unexpected {what} {text!r}") from err


@dataclass(frozen=True)
class TargetSpec:
    """One estimand of an analysis.

    ``arm`` is the canonical vector e(z), ``contrast`` the contrast column g_K
    (so gamma = Q tau_K), ``effect`` the scaled contrast Q^-1 g_K (so
    gamma = tau_K), ``custom`` an explicit length-Q vector and ``best_arm`` the
    tie-averaged largest arm mean among arms with at most K0 active factors.
    """

    kind: str
    arm: Optional[str] = None
    factors: Tuple[int, ...] = ()
    values: Tuple[float, ...] = ()
    max_active: Optional[int] = None
    eta: Union[float, str] = AUTO_ETA

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise InputError(
                f"Unexpected target kind {self.kind!r}, expected one of {TARGET_KINDS}"
            )

    @classmethod
    def parse(cls, text: str) -> "TargetSpec":
        """Parse ``arm:101``, ``contrast:1,2``, ``effect:1,2``, ``custom:0,0,0,1``
        or ``best_arm[:K0=2,eta=0.1]``."""

        kind, _, argument = text.strip().partition(":")
        if kind == "arm":
            TreatmentLevel.from_string(argument)
            return cls(kind, arm=argument)
        if kind in ("contrast", "effect"):
            factors = tuple(_split_numbers(argument, int, "factor list"))
            FactorSet.from_factors(factors)
            return cls(kind, factors=factors)
        if kind == "custom":
            values = tuple(_split_numbers(argument, float, "weighting vector"))
            return cls(kind, values=values)
        if kind == "best_arm":
            return cls._parse_best_arm(argument)
        raise InputError(f"Unexpected target {text!r}, expected one of {TARGET_KINDS}")

    @classmethod
    def _parse_best_arm(cls, argument: str) -> "TargetSpec":
        options: Dict[str, str] = {}
        for part in filter(None, argument.split(",")):
            key, sep, value = part.partition("=")
            if not sep or key.strip() not in ("K0", "eta"):
                raise InputError(
                    f"Unexpected best_arm option {part!r}, expected K0=.. or eta=.."
                )
            options[key.strip()] = value.strip()

        try:
            max_active = int(options["K0"]) if "K0" in options else None
            eta = options.get("eta", AUTO_ETA)
            eta = eta if eta == AUTO_ETA else float(eta)
        except ValueError as err:
            raise InputError(f"Unexpected best_arm options {argument!r}") from err
        return cls("best_arm", max_active=max_active, eta=eta)

    @property
    def label(self) -> str:
        if self.kind == "arm":
            return f"arm:{self.arm}"
        if self.kind in ("contrast", "effect"):
            return f"{self.kind}:{','.join(map(str, self.factors))}"
        if self.kind == "custom":
            return "custom:" + ",".join(f"{value:g}" for value in self.values)
        parts = [] if self.max_active is None else [f"K0={self.max_active}"]
        if self.eta != AUTO_ETA:
            parts.append(f"eta={self.eta:g}")
        return "best_arm" + (":" + ",".join(parts) if parts else "")

    def weight(self, n_factors: int) -> np.ndarray:
        """Weighting vector f indexed by r(z)."""

        if self.kind == "arm":
            if len(self.arm) != n_factors:
                raise InputError(f"Arm {self.arm!r} does not have {n_factors} digits")
            weights = np.zeros(1 << n_factors)
            weights[TreatmentLevel.from_string(self.arm).row(n_factors)] = 1.0
            return weights
        if self.kind in ("contrast", "effect"):
            column = contrast_vector(FactorSet.from_factors(self.factors), n_factors)
            return column if self.kind == "contrast" else column / (1 << n_factors)
        if self.kind == "custom":
            return as_weight_vector(self.values, n_factors)
        raise InputError("A best_arm target has no single weighting vector")

    def best_arm_config(self, n_factors: int, alpha: float) -> BestArmConfig:
        max_active = n_factors if self.max_active is None else self.max_active
        return BestArmConfig(max_active=max_active, eta=self.eta, alpha_ci=alpha)


def parse_targets(texts: Sequence[str]) -> List[TargetSpec]:
    return [TargetSpec.parse(text) for text in texts]


def _arm_records(dataset: FactorialDataset) -> List[dict]:
    return [
        {
            "arm": arm.treatment.to_string(dataset.n_factors),
            "n": arm.n,
            "mean": arm.mean,
            "var": arm.var,
        }
        for arm in dataset.arms
    ]


def analyze(
    dataset: FactorialDataset,
    config: ScreeningConfig,
    targets: Sequence[TargetSpec] = (),
) -> Dict[str, Any]:
    """Screen the effects, then estimate every target on the selected model.

    Each weighting-vector target gets a plug-in row and an RLS row (labelled
    ``rls_under`` or ``rls_over`` under those strategies); ``rls_under`` rows
    also carry the orthogonality gap of f against the unscreened levels.
    ``best_arm`` targets produce a tie report.

    Example:

    .. code-block:: python

        report = analyze(
            parse_dataset("data.csv"),
            ScreeningConfig.from_options(levels=2, alpha=0.05),
            parse_targets(["arm:11111111", "best_arm:K0=2"]),
        )
        report["model"]  # [[], [1], [2], [1, 2]]

    Args:
        dataset (FactorialDataset): observed units
        config (ScreeningConfig): screening settings
        targets (Sequence[TargetSpec], optional): estimands. Defaults to ().

    Raises:
        InputError: a target does not fit K.
        ReplicationError: an arm needed for screening or estimation has fewer
            than two units.

    Returns:
        Dict[str, Any]: report with the screening trace, final model,
            estimate rows and best-arm reports
    """

    n_factors = dataset.n_factors
    weights = {
        target.label: target.weight(n_factors)
        for target in targets
        if target.kind != "best_arm"
    }

    logger.info("screening %d units over K=%d factors", dataset.n_units, n_factors)
    trace = forward_screen(dataset, config)
    model = trace.model
    logger.info("selected %d effects", len(model))

    method = RLS_METHODS[config.strategy]
    estimates = []
    for label, f in weights.items():
        estimates.append(plug_in_estimate(f, dataset, config.alpha_ci).to_record(label))
        rls = rls_estimate(f, model, dataset, config.alpha_ci, method)
        record = rls.to_record(label, model)
        if config.strategy is Strategy.UNDER:
            gap = orthogonality_gap(f, n_factors, config.stop_level)
            record["orthogonality_gap"] = gap
        estimates.append(record)

    best_arms = []
    for target in targets:
        if target.kind == "best_arm":
            report = best_arm_estimate(
                dataset, model, target.best_arm_config(n_factors, config.alpha_ci)
            )
            best_arms.append({"target": target.label, **report.to_dict()})

    return {
        "schema": SCHEMA,
        "n_factors": n_factors,
        "n_units": dataset.n_units,
        "arms": _arm_records(dataset),
        "screening": trace.to_dict(),
        "model": model.to_list(),
        "estimates": estimates,
        "best_arm": best_arms,
    }


def estimates_frame(report: Dict[str, Any]) -> pd.DataFrame:
    """Flat table of the estimate and best-arm rows of an :func:`analyze` report."""

    columns = ["target", "method", "gamma_hat", "se", "ci_lo", "ci_hi", "model", "tie"]
    rows = [
        {
            **{key: record.get(key) for key in columns},
            "model": None if record["model"] is None else str(record["model"]),
        }
        for record in report["estimates"]
    ]
    model = str(report["model"])
    for record in report["best_arm"]:
        rows.append(
            {
                "target": record["target"],
                "method": "best_arm",
                "gamma_hat": record["estimate"],
                "se": record["se"],
                "ci_lo": record["ci_lo"],
                "ci_hi": record["ci_hi"],
                "model": model,
                "tie": ";".join(record["tie"]),
            }
        )
    return pd.DataFrame(rows, columns=columns)


def write_report(report: Dict[str, Any], stream: IO[str], fmt: str = "json"):
    """Write a report as JSON, or its estimate rows as CSV."""

    if fmt == "json":
        json.dump(to_jsonable(report), stream, indent=2)
        stream.write("\n")
    elif fmt == "csv":
        estimates_frame(report).to_csv(stream, index=False, lineterminator="\n")
    else:
        raise InputError(f"Unexpected format {fmt!r}, expected one of {REPORT_FORMATS}")


@dataclass(frozen=True)
class AnalysisRequest:
    """Everything ``factorial-screen analyze`` needs; K comes from the CSV header."""

    input: Path
    config: ScreeningConfig
    targets: Tuple[TargetSpec, ...] = ()
    output: Optional[Path] = None
    format: str = "json"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.format not in REPORT_FORMATS:
            raise InputError(
                f"Unexpected format {self.format!r}, expected one of {REPORT_FORMATS}"
            )


def run_analysis(
    request: AnalysisRequest, stream: Optional[IO[str]] = None
) -> Dict[str, Any]:
    """Read the dataset, analyze it and write the report.

    The report goes to ``request.output`` when set, otherwise to ``stream``.
    """

    dataset = parse_dataset(request.input)
    report = analyze(dataset, request.config, request.targets)
    report["seed"] = request.seed

    if request.output is not None:
        with open(request.output, "w", encoding="utf-8", newline="") as handle:
            write_report(report, handle, request.format)
        logger.info("wrote %s report to %s", request.format, request.output)
    elif stream is not None:
        write_report(report, stream, request.format)
    return report
