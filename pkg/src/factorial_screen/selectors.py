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

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from more_itertools import partition

from .design import FactorSet
from .errors import InputError
from .estimation import EffectEstimate
from .misc import normal_quantile


@dataclass(frozen=True)
class CandidateDecision:
    """Outcome of testing one candidate effect."""

    estimate: EffectEstimate
    threshold: float
    selected: bool
    shrunk: Optional[float] = None

    @property
    def factor_set(self) -> FactorSet:
        return self.estimate.factor_set

    def to_dict(self) -> dict:
        record = {
            "set": list(self.factor_set.factors),
            "tau_hat": self.estimate.tau_hat,
            "se": self.estimate.se,
            "threshold": self.threshold,
            "selected": self.selected,
        }
        if self.shrunk is not None:
            record["shrunk"] = self.shrunk
        return record


@dataclass(frozen=True)
class Selection:
    threshold: float
    decisions: Tuple[CandidateDecision, ...]

    @property
    def selected(self) -> List[FactorSet]:
        return [decision.factor_set for decision in self.decisions if decision.selected]


def bonferroni_level(alpha: float, n_new: int) -> float:
    """Per-test significance level min(alpha / m, 1)."""

    return min(alpha / n_new, 1.0)


def bonferroni_threshold(alpha: float, n_new: int) -> float:
    """Two-sided normal critical value at the Bonferroni-corrected level."""

    level = bonferroni_level(alpha, n_new)
    return 0.0 if level >= 1.0 else normal_quantile(1.0 - level / 2.0)


class SStep(ABC):
    """Sparsity screening rule applied to one level's candidates.

    Subclasses provide a threshold for the level and the statistic compared to
    it; :meth:`select` runs the rule over all candidates.
    """

    name: str = ""

    @abstractmethod
    def threshold(
        self, candidates: Sequence[EffectEstimate], alpha: float, n_new: int
    ) -> float:
        """Threshold of a level, given its significance level and candidate count."""

    @abstractmethod
    def keeps(self, estimate: EffectEstimate, threshold: float) -> bool:
        """Whether a candidate survives the threshold."""

    def decide(self, estimate: EffectEstimate, threshold: float) -> CandidateDecision:
        return CandidateDecision(estimate, threshold, self.keeps(estimate, threshold))

    def select(
        self, candidates: Sequence[EffectEstimate], alpha: float, n_new: int
    ) -> Selection:
        """Run the rule over ``candidates``.

        Args:
            candidates (Sequence[EffectEstimate]): estimates of the new effects
            alpha (float): significance level of the level
            n_new (int): number of new candidates m, the multiplicity divisor

        Returns:
            Selection: threshold and per-candidate decisions
        """

        if not candidates or n_new <= 0:
            return Selection(float("inf"), ())

        threshold = self.threshold(candidates, alpha, n_new)
        decisions = tuple(self.decide(estimate, threshold) for estimate in candidates)
        return Selection(threshold, decisions)

    @staticmethod
    def parse(text: str) -> "SStep":
        """Parse ``t``, ``bonferroni_t``, ``lasso`` or ``lasso:<lambda>``."""

        name, _, argument = text.strip().partition(":")
        if name in ("t", "bonferroni_t", "bonferroni") and not argument:
            return BonferroniTSelector()
        if name == "lasso":
            if not argument:
                return LassoSelector()
            try:
                return LassoSelector(float(argument))
            except ValueError as err:
                raise InputError(f"Unexpected lasso penalty {argument!r}") from err
        raise InputError(
            f"Unexpected S-step {text!r}, expected t, lasso or lasso:<lambda>"
        )

    def describe(self) -> str:
        return self.name


class BonferroniTSelector(SStep):
    """Marginal t-tests at the Bonferroni-corrected level min(alpha / m, 1).

    A candidate is kept when its estimate is nonzero and
    |tau_hat| / se >= z_{1 - min(alpha/m, 1)/2}.
    """

    name = "bonferroni_t"

    def threshold(
        self, candidates: Sequence[EffectEstimate], alpha: float, n_new: int
    ) -> float:
        return bonferroni_threshold(alpha, n_new)

    def keeps(self, estimate: EffectEstimate, threshold: float) -> bool:
        return estimate.tau_hat != 0 and abs(estimate.t_stat) >= threshold

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BonferroniTSelector)

    def __hash__(self) -> int:
        return hash(self.name)

    def __repr__(self) -> str:
        return "BonferroniTSelector()"


class LassoSelector(SStep):
    """Lasso screening, which under an orthogonal design keeps |tau_hat| >= lambda.

    Without an explicit penalty, each level uses
    lambda = z_{1 - alpha/(2m)} * median(se), aligning the effective cut-off
    with the Bonferroni rule; like that rule it then drops estimates that are
    exactly zero. An explicit penalty keeps the inclusive
    |tau_hat| >= lambda rule, so ``lasso:0`` keeps everything.

    Args:
        penalty (Optional[float], optional): lambda >= 0. Defaults to None.
    """

    name = "lasso"

    def __init__(self, penalty: Optional[float] = None):
        if penalty is not None and not penalty >= 0:
            raise InputError(f"Unexpected {penalty=}, lasso penalty must be >= 0")
        self.penalty = penalty

    def threshold(
        self, candidates: Sequence[EffectEstimate], alpha: float, n_new: int
    ) -> float:
        if self.penalty is not None:
            return self.penalty
        ses = np.array([estimate.se for estimate in candidates])
        return bonferroni_threshold(alpha, n_new) * float(np.median(ses))

    def keeps(self, estimate: EffectEstimate, threshold: float) -> bool:
        if self.penalty is None and estimate.tau_hat == 0:
            return False
        return abs(estimate.tau_hat) >= threshold

    def decide(self, estimate: EffectEstimate, threshold: float) -> CandidateDecision:
        return CandidateDecision(
            estimate,
            threshold,
            self.keeps(estimate, threshold),
            soft_threshold(estimate.tau_hat, threshold),
        )

    def describe(self) -> str:
        return self.name if self.penalty is None else f"{self.name}:{self.penalty:g}"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LassoSelector) and other.penalty == self.penalty

    def __hash__(self) -> int:
        return hash((self.name, self.penalty))

    def __repr__(self) -> str:
        return f"LassoSelector({self.penalty!r})"


def soft_threshold(value: float, penalty: float) -> float:
    """Lasso coefficient under an orthogonal design: sign(v) * max(|v| - penalty, 0)."""

    if abs(value) <= penalty:
        return 0.0
    return value - penalty if value > 0 else value + penalty


def split_decisions(selection: Selection) -> Tuple[List[FactorSet], List[FactorSet]]:
    """(rejected, selected) effects of a selection."""

    rejected, selected = partition(
        lambda decision: decision.selected, selection.decisions
    )
    return [d.factor_set for d in rejected], [d.factor_set for d in selected]
