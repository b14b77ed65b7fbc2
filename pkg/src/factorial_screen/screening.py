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

"""Forward factorial screening.

Screening alternates a deterministic heredity step (H-step), which proposes the
level-d candidates allowed by the level-(d-1) selection, and a data-driven
sparsity step (S-step), which keeps the candidates that pass a marginal test
or a Lasso threshold in the WLS fit of the current model plus the candidates.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

from .design import (
    INTERCEPT,
    FactorSet,
    Heredity,
    WorkingModel,
    check_factor_count,
    heredity_closure,
    heredity_expand,
)
from .errors import InputError, ReplicationError
from .estimation import (
    COVARIANCE_ESTIMATORS,
    DEFAULT_ALPHA,
    ArmSummaries,
    Data,
    EffectEstimate,
    summary_of,
    wls_effects,
)
from .misc import normal_quantile
from .selectors import (
    BonferroniTSelector,
    CandidateDecision,
    LassoSelector,
    SStep,
    split_decisions,
)

__all__ = [
    "LevelTrace",
    "ScreeningConfig",
    "ScreeningTrace",
    "Strategy",
    "bonferroni_t_select",
    "forward_screen",
    "lasso_select",
    "naive_screen",
    "normal_quantile",
]

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    """How screening treats levels beyond d*.

    ``under`` stops testing after d*; ``over`` adds every effect the heredity
    principle allows beyond d* without testing it.
    """

    FULL = "full"
    UNDER = "under"
    OVER = "over"


def _parse_alphas(alpha: Union[str, float, Sequence[float]]) -> Tuple[float, ...]:
    if isinstance(alpha, str):
        try:
            return tuple(float(part) for part in alpha.split(","))
        except ValueError as err:
            raise InputError(f"Unexpected significance levels {alpha!r}") from err
    if isinstance(alpha, (int, float)):
        return (float(alpha),)
    return tuple(float(value) for value in alpha)


def _parse_strategy(text: str) -> Tuple["Strategy", Optional[int]]:
    name, _, argument = text.strip().partition(":")
    try:
        strategy = Strategy(name)
    except ValueError as err:
        raise InputError(
            f"Unexpected strategy {text!r}, expected full, under:d or over:d"
        ) from err

    if strategy is Strategy.FULL:
        if argument:
            raise InputError(f"Strategy 'full' takes no level, got {text!r}")
        return strategy, None
    try:
        return strategy, int(argument)
    except ValueError as err:
        raise InputError(
            f"Strategy {text!r} needs an integer level, e.g. {name}:1"
        ) from err


@dataclass(frozen=True)
class ScreeningConfig:
    """Settings of forward screening.

    Args:
        max_level (int): deepest interaction level D
        alphas (Tuple[float, ...]): alpha_d for d = 1..D; a single value is
            used at every level
        heredity (Heredity): weak or strong
        s_step (SStep): sparsity rule
        strategy (Strategy): full, under or over
        stop_level (Optional[int]): d* for the under/over strategies
        alpha_ci (float): 1 - confidence level of downstream intervals
        covariance (str): ``direct`` or ``ehw`` standard errors in the S-step
    """

    max_level: int = 2
    alphas: Tuple[float, ...] = (DEFAULT_ALPHA,)
    heredity: Heredity = Heredity.STRONG
    s_step: SStep = field(default_factory=BonferroniTSelector)
    strategy: Strategy = Strategy.FULL
    stop_level: Optional[int] = None
    alpha_ci: float = DEFAULT_ALPHA
    covariance: str = "direct"

    def __post_init__(self):
        if isinstance(self.max_level, bool) or not isinstance(self.max_level, int):
            raise InputError(f"Unexpected {self.max_level=}, expected an integer")
        if self.max_level < 1:
            raise InputError(f"Unexpected {self.max_level=}, expected D >= 1")

        alphas = _parse_alphas(self.alphas)
        if len(alphas) == 1:
            alphas = alphas * self.max_level
        if len(alphas) != self.max_level:
            raise InputError(
                f"Got {len(alphas)} significance levels for D={self.max_level}"
            )
        if not all(0 < alpha <= 1 for alpha in alphas):
            raise InputError(f"Significance levels must lie in (0, 1], got {alphas}")
        object.__setattr__(self, "alphas", alphas)

        object.__setattr__(self, "heredity", Heredity(self.heredity))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not isinstance(self.s_step, SStep):
            raise InputError(f"Unexpected {type(self.s_step)=}")

        if self.strategy is Strategy.FULL:
            if self.stop_level is not None:
                raise InputError("stop_level only applies to the under/over strategies")
        elif self.stop_level is None or not 1 <= self.stop_level <= self.max_level:
            raise InputError(
                f"Strategy {self.strategy.value} needs 1 <= d* <= {self.max_level}, "
                f"got {self.stop_level}"
            )

        if not 0 < self.alpha_ci < 1:
            raise InputError(f"Unexpected {self.alpha_ci=}, expected 0 < alpha < 1")
        if self.covariance not in COVARIANCE_ESTIMATORS:
            raise InputError(
                f"Unexpected {self.covariance=}, expected {COVARIANCE_ESTIMATORS}"
            )

    @classmethod
    def from_options(
        cls,
        levels: int = 2,
        alpha: Union[str, float, Sequence[float]] = DEFAULT_ALPHA,
        heredity: str = "strong",
        s_step: str = "t",
        strategy: str = "full",
        alpha_ci: float = DEFAULT_ALPHA,
        covariance: str = "direct",
    ) -> "ScreeningConfig":
        """Build from the command-line string forms.

        Example:

        .. code-block:: python

            ScreeningConfig.from_options(
                3, "0.05,0.05,0.01", "weak", "lasso:0.2", "over:2"
            )
        """

        strategy_kind, stop_level = _parse_strategy(strategy)
        return cls(
            max_level=levels,
            alphas=_parse_alphas(alpha),
            heredity=heredity,
            s_step=SStep.parse(s_step),
            strategy=strategy_kind,
            stop_level=stop_level,
            alpha_ci=alpha_ci,
            covariance=covariance,
        )

    def alpha(self, level: int) -> float:
        return self.alphas[level - 1]

    @property
    def tested_levels(self) -> int:
        """Number of levels the S-step runs on."""

        return self.max_level if self.strategy is Strategy.FULL else self.stop_level

    def check(self, n_factors: int) -> "ScreeningConfig":
        check_factor_count(n_factors)
        if self.max_level > n_factors:
            raise InputError(
                f"Unexpected D={self.max_level} for K={n_factors}, need D <= K"
            )
        return self

    def to_dict(self) -> dict:
        strategy = self.strategy.value
        if self.stop_level is not None:
            strategy += f":{self.stop_level}"
        return {
            "levels": self.max_level,
            "alphas": list(self.alphas),
            "heredity": self.heredity.value,
            "s_step": self.s_step.describe(),
            "strategy": strategy,
            "alpha_ci": self.alpha_ci,
            "covariance": self.covariance,
        }


@dataclass(frozen=True)
class LevelTrace:
    """What screening did at one level.

    ``candidates`` are the effects left by the H-step, ``selected`` those kept
    by the S-step. Levels appended by heredity closure are not ``tested`` and
    have no decisions. ``level`` is None for the single saturated pass of
    :func:`naive_screen`.
    """

    level: Optional[int]
    candidates: Tuple[FactorSet, ...]
    selected: Tuple[FactorSet, ...]
    decisions: Tuple[CandidateDecision, ...] = ()
    alpha: Optional[float] = None
    threshold: Optional[float] = None
    tested: bool = True

    @property
    def divisor(self) -> int:
        return len(self.candidates) if self.tested else 0

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "tested": self.tested,
            "alpha": self.alpha,
            "divisor": self.divisor,
            "threshold": self.threshold,
            "candidates": [list(s.factors) for s in self.candidates],
            "selected": [list(s.factors) for s in self.selected],
            "tests": [decision.to_dict() for decision in self.decisions],
        }


@dataclass(frozen=True)
class ScreeningTrace:
    """Level-by-level record of a screening run and the final working model."""

    n_factors: int
    config: ScreeningConfig
    levels: Tuple[LevelTrace, ...]
    model: WorkingModel

    def selected_at(self, level: int) -> List[FactorSet]:
        return [
            factor_set
            for trace in self.levels
            if trace.level == level
            for factor_set in trace.selected
        ]

    def to_dict(self) -> dict:
        return {
            "n_factors": self.n_factors,
            "config": self.config.to_dict(),
            "levels": [level.to_dict() for level in self.levels],
            "model": self.model.to_list(),
        }


def bonferroni_t_select(
    candidates: Sequence[EffectEstimate], alpha: float, n_new: Optional[int] = None
) -> List[FactorSet]:
    """Keep candidates significant under Bonferroni-corrected marginal t-tests.

    A candidate is kept iff tau_hat != 0 and
    |tau_hat| / se >= z_{1 - min(alpha/m, 1)/2}.

    Args:
        candidates (Sequence[EffectEstimate]): new effects of one level
        alpha (float): significance level alpha_d of the level
        n_new (Optional[int], optional): divisor m. Defaults to None
            (``len(candidates)``).

    Returns:
        List[FactorSet]: selected effects
    """

    n_new = len(candidates) if n_new is None else n_new
    return BonferroniTSelector().select(candidates, alpha, n_new).selected


def lasso_select(
    candidates: Sequence[EffectEstimate], penalty: float
) -> List[FactorSet]:
    """Keep candidates with |tau_hat| >= lambda (closed-form Lasso support).

    Args:
        candidates (Sequence[EffectEstimate]): new effects of one level
        penalty (float): lambda >= 0

    Returns:
        List[FactorSet]: selected effects
    """

    return LassoSelector(penalty).select(candidates, 1.0, len(candidates)).selected


def _test_level(
    summary: ArmSummaries,
    model: WorkingModel,
    candidates: List[FactorSet],
    level: int,
    config: ScreeningConfig,
) -> LevelTrace:
    try:
        fit = wls_effects(
            summary, model.union(candidates), covariance=config.covariance
        )
    except ReplicationError as err:
        raise err.with_context(f"level {level}") from err

    estimates = [fit.estimate(candidate) for candidate in candidates]
    alpha = config.alpha(level)
    selection = config.s_step.select(estimates, alpha, len(candidates))
    rejected, selected = split_decisions(selection)
    logger.debug(
        "level %d: %d candidates, threshold %.4g, kept %s, dropped %s",
        level,
        len(candidates),
        selection.threshold,
        [str(s) for s in selected],
        [str(s) for s in rejected],
    )
    return LevelTrace(
        level,
        tuple(candidates),
        tuple(selected),
        selection.decisions,
        alpha,
        selection.threshold,
    )


def forward_screen(data: Data, config: ScreeningConfig) -> ScreeningTrace:
    """Forward factorial screening.

    For d = 1..D: the H-step proposes the level-d effects allowed by the
    level-(d-1) selection, the current model plus these candidates is fitted
    by WLS, and the S-step keeps candidates using their estimates and standard
    errors with the multiplicity divisor m = number of candidates. Under the
    ``under`` strategy the loop stops after d*; under ``over`` the levels after
    d* are filled by heredity closure of the level-d* selection.

    Args:
        data (Data): dataset or arm summaries
        config (ScreeningConfig): screening settings

    Raises:
        InputError: D exceeds K.
        ReplicationError: some arm has fewer than two units (message names the
            level).

    Returns:
        ScreeningTrace: per-level record and the selected working model
    """

    summary = summary_of(data)
    n_factors = summary.n_factors
    config.check(n_factors)

    model = WorkingModel()
    previous: List[FactorSet] = [INTERCEPT]
    levels: List[LevelTrace] = []

    for level in range(1, config.tested_levels + 1):
        candidates = heredity_expand(previous, level, config.heredity, n_factors)
        if not candidates:
            logger.debug("level %d: no candidates left by the heredity step", level)
            levels.append(LevelTrace(level, (), (), alpha=config.alpha(level)))
            previous = []
            continue

        trace = _test_level(summary, model, candidates, level, config)
        levels.append(trace)
        model = model.union(trace.selected)
        previous = list(trace.selected)

    if config.strategy is Strategy.OVER:
        closure = heredity_closure(
            previous, config.max_level - config.stop_level, config.heredity, n_factors
        )
        for level, added in enumerate(closure, start=config.stop_level + 1):
            logger.debug(
                "level %d: %d effects added by heredity closure", level, len(added)
            )
            levels.append(LevelTrace(level, tuple(added), tuple(added), tested=False))
            model = model.union(added)

    return ScreeningTrace(n_factors, config, tuple(levels), model)


def naive_screen(data: Data, config: ScreeningConfig) -> ScreeningTrace:
    """Screen all Q - 1 non-intercept effects in one saturated pass.

    Uses the S-step of ``config`` with significance level ``config.alphas[0]``
    and divisor Q - 1 (or one global lambda); heredity and strategy are not
    applied.

    Args:
        data (Data): dataset or arm summaries
        config (ScreeningConfig): S-step and significance level

    Returns:
        ScreeningTrace: a single untiered level and the selected working model
    """

    summary = summary_of(data)
    n_factors = summary.n_factors
    saturated = WorkingModel.full(n_factors)
    fit = wls_effects(summary, saturated, covariance=config.covariance)

    estimates = fit.estimates[1:]
    alpha = config.alphas[0]
    selection = config.s_step.select(estimates, alpha, len(estimates))
    selected = selection.selected
    level = LevelTrace(
        None,
        tuple(estimate.factor_set for estimate in estimates),
        tuple(selected),
        selection.decisions,
        alpha,
        selection.threshold,
    )
    return ScreeningTrace(n_factors, config, (level,), WorkingModel(selected))
