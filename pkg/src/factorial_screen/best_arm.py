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

"""Inference on the best arm, or more generally the largest of L linear targets.

The largest RLS estimate is biased upward when several targets are close (the
winner's curse). Instead of reporting it, the targets within eta of the maximum
form a tie set and their projected weights are averaged.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt

from .design import TreatmentLevel, WorkingModel, check_factor_count
from .errors import InputError
from .estimation import DEFAULT_ALPHA, Data, summary_of, rls_vector_estimate
from .misc import normal_quantile, wald_interval

__all__ = [
    "BestArmConfig",
    "TieReport",
    "best_arm_estimate",
    "canonical_arms",
    "canonical_weights",
    "default_eta",
    "tie_set",
]

logger = logging.getLogger(__name__)

AUTO_ETA = "auto"


def canonical_arms(n_factors: int, max_active: int) -> List[TreatmentLevel]:
    """Arms with at most ``max_active`` factors at level 1, ordered by r(z)."""

    check_factor_count(n_factors)
    if not 0 <= max_active <= n_factors:
        raise InputError(
            f"Unexpected K0={max_active} for K={n_factors}, need 0 <= K0 <= K"
        )

    factors = range(1, n_factors + 1)
    arms = [
        TreatmentLevel.from_bits([1 if k in active else 0 for k in factors])
        for size in range(max_active + 1)
        for active in combinations(factors, size)
    ]
    return sorted(arms, key=lambda arm: arm.row(n_factors))


def canonical_weights(n_factors: int, max_active: int) -> np.ndarray:
    """Canonical basis vectors e(z) of :func:`canonical_arms`, one per row (L x Q)."""

    rows = [arm.row(n_factors) for arm in canonical_arms(n_factors, max_active)]
    weights = np.zeros((len(rows), 1 << n_factors))
    weights[np.arange(len(rows)), rows] = 1.0
    return weights


def tie_set(gamma_hats: npt.ArrayLike, eta: float) -> List[int]:
    """Indices l with |gamma_hat_l - max gamma_hat| <= eta, in increasing order."""

    values = np.asarray(gamma_hats, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InputError("Need at least one estimate to form a tie set")
    if not eta >= 0:
        raise InputError(f"Unexpected {eta=}, expected eta >= 0")
    return np.flatnonzero(values.max() - values <= eta).tolist()


def default_eta(gamma_hats: npt.ArrayLike, ses: npt.ArrayLike) -> float:
    """Bonferroni-width tie threshold eta = 2 z_{1 - 0.05/(2L)} max_l se_l.

    This is a heuristic default, not a tuned threshold; pass an explicit eta to
    override it.
    """

    n_weights = np.asarray(gamma_hats).reshape(-1).size
    if n_weights == 0:
        raise InputError("Need at least one estimate to derive eta")
    largest = float(np.max(ses))
    if largest == 0.0:
        return 0.0
    return 2.0 * normal_quantile(1.0 - DEFAULT_ALPHA / (2.0 * n_weights)) * largest


@dataclass(frozen=True)
class BestArmConfig:
    """Targets and tie threshold of a best-arm analysis.

    Exactly one of ``weights`` (L explicit weighting vectors) and
    ``max_active`` (the arms with at most K0 active factors) is given.

    Args:
        weights (Optional[Tuple[np.ndarray, ...]]): explicit weighting vectors
        labels (Optional[Tuple[str, ...]]): names of the explicit vectors
        max_active (Optional[int]): constraint K0
        eta (Union[float, str]): tie threshold, or ``"auto"`` for
            :func:`default_eta`
        alpha_ci (float): 1 - confidence level
    """

    weights: Optional[Tuple[np.ndarray, ...]] = field(default=None, repr=False)
    labels: Optional[Tuple[str, ...]] = None
    max_active: Optional[int] = None
    eta: Union[float, str] = AUTO_ETA
    alpha_ci: float = DEFAULT_ALPHA

    def __post_init__(self):
        if (self.weights is None) == (self.max_active is None):
            raise InputError(
                "Give either explicit weights or the constraint K0, not both"
            )
        if self.weights is not None:
            weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
            if not weights:
                raise InputError("Need at least one weighting vector (L >= 1)")
            object.__setattr__(self, "weights", weights)
            if self.labels is not None and len(self.labels) != len(weights):
                raise InputError(
                    f"Got {len(self.labels)} labels for {len(weights)} weights"
                )
        elif self.max_active < 0:
            raise InputError(f"Unexpected K0={self.max_active}, expected K0 >= 0")

        if isinstance(self.eta, str):
            if self.eta != AUTO_ETA:
                raise InputError(
                    f"Unexpected eta={self.eta!r}, expected a number or 'auto'"
                )
        elif not self.eta >= 0:
            raise InputError(f"Unexpected eta={self.eta}, expected eta >= 0")
        if not 0 < self.alpha_ci < 1:
            raise InputError(f"Unexpected {self.alpha_ci=}, expected 0 < alpha < 1")

    def resolve(self, n_factors: int) -> Tuple[np.ndarray, List[str]]:
        """L x Q weight matrix and one label per row."""

        if self.max_active is not None:
            arms = canonical_arms(n_factors, self.max_active)
            return canonical_weights(n_factors, self.max_active), [
                arm.to_string(n_factors) for arm in arms
            ]

        matrix = np.vstack(self.weights)
        if matrix.shape[1] != 1 << n_factors:
            raise InputError(
                f"Length mismatch: weighting vectors have {matrix.shape[1]} entries, "
                f"expected {1 << n_factors}"
            )
        if self.labels:
            return matrix, list(self.labels)
        labels = [f"f{index + 1}" for index in range(len(matrix))]
        return matrix, labels


@dataclass(frozen=True)
class TieReport:
    """Result of the tie-averaged best-arm analysis.

    ``tie_indices`` are 0-based positions into ``gamma_hats``; ``order`` lists
    all positions by decreasing estimate so callers can walk the ordered values.
    """

    gamma_hats: np.ndarray
    ses: np.ndarray
    tie_indices: Tuple[int, ...]
    estimate: float
    variance: float
    eta: float
    alpha: float
    labels: Tuple[str, ...]
    model_size: int

    @property
    def n_weights(self) -> int:
        return len(self.gamma_hats)

    @property
    def se(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    @property
    def ci(self) -> Tuple[float, float]:
        return wald_interval(self.estimate, self.se, self.alpha)

    @property
    def order(self) -> List[int]:
        return np.argsort(-self.gamma_hats, kind="stable").tolist()

    @property
    def tie_labels(self) -> List[str]:
        return [self.labels[index] for index in self.tie_indices]

    def to_dict(self) -> dict:
        low, high = self.ci
        return {
            "tie": self.tie_labels,
            "estimate": self.estimate,
            "se": self.se,
            "ci_lo": low,
            "ci_hi": high,
            "eta": self.eta,
            "n_weights": self.n_weights,
            "model_size": self.model_size,
            "ranking": [
                {
                    "label": self.labels[index],
                    "gamma_hat": self.gamma_hats[index],
                    "se": self.ses[index],
                }
                for index in self.order
            ],
        }


def best_arm_estimate(
    data: Data, model: WorkingModel, config: BestArmConfig
) -> TieReport:
    """Tie-averaged RLS inference on the largest target.

    Every target gets its RLS estimate gamma_hat_l = f_l[M]^T Y_hat. The tie set
    collects the targets within eta of the largest estimate, and their projected
    weights are averaged into f_(1). The estimate is f_(1)^T Y_hat, which is the
    mean of the tied estimates, and its variance is f_(1)^T V_hat f_(1).

    Args:
        data (Data): dataset or arm summaries
        model (WorkingModel): selected (or supplied) working model
        config (BestArmConfig): targets and tie threshold

    Raises:
        ReplicationError: an arm with nonzero projected weight has fewer than two
            units.

    Returns:
        TieReport: ranking, tie set and interval
    """

    summary = summary_of(data)
    weights, labels = config.resolve(summary.n_factors)
    fit = rls_vector_estimate(weights, model, summary)
    gamma_hats = np.asarray(fit.estimates, dtype=np.float64)
    ses = fit.standard_errors

    eta = default_eta(gamma_hats, ses) if config.eta == AUTO_ETA else float(config.eta)
    tie = tie_set(gamma_hats, eta)

    average = np.zeros(len(gamma_hats))
    average[tie] = 1.0 / len(tie)
    estimate = float(np.mean(gamma_hats[tie]))
    variance = float(average @ fit.covariance @ average)
    logger.debug(
        "best arm: eta=%.4g, %d of %d targets tied", eta, len(tie), len(gamma_hats)
    )

    return TieReport(
        gamma_hats,
        ses,
        tuple(tie),
        estimate,
        variance,
        eta,
        config.alpha_ci,
        tuple(labels),
        len(model),
    )

