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

"""Design-based estimators for 2^K factorial experiments.

All estimators are functions of the per-arm summaries (counts, sample means and
sample variances), so a dataset is summarized once and then queried for any
number of weighting vectors and working models.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .design import (
    FactorSet,
    TreatmentLevel,
    WorkingModel,
    canonical_masks,
    check_factor_count,
    contrast_columns,
    effect_synthesis,
    effect_transform,
    factor_count_of,
)
from .errors import InputError, ReplicationError
from .misc import critical_value, normal_cdf, wald_interval

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05

COVARIANCE_ESTIMATORS = ("direct", "ehw")


@dataclass(frozen=True)
class ArmSummary:
    """Observed summary of one treatment arm.

    ``mean`` is NaN for an empty arm and ``var`` (divisor n - 1) is NaN unless
    the arm has at least two units.
    """

    treatment: TreatmentLevel
    n: int
    mean: float
    var: float


@dataclass(frozen=True)
class ArmSummaries:
    """Per-arm counts, sample means and sample variances, indexed by r(z)."""

    n_factors: int
    counts: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_arms(self) -> int:
        return 1 << self.n_factors

    @property
    def n_units(self) -> int:
        return int(self.counts.sum())

    @property
    def vhat(self) -> np.ndarray:
        """Diagonal of the covariance estimate of the arm means, S(z,z)/N(z).

        Entries of arms with fewer than two units are NaN.
        """

        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts >= 2, self.variances / self.counts, np.nan)

    @property
    def inference_ready(self) -> bool:
        return bool(np.all(self.counts >= 2))

    def label(self, row: int) -> str:
        return TreatmentLevel.from_row(row, self.n_factors).to_string(self.n_factors)

    @property
    def arms(self) -> List[ArmSummary]:
        return [
            ArmSummary(
                TreatmentLevel.from_row(row, self.n_factors),
                int(self.counts[row]),
                float(self.means[row]),
                float(self.variances[row]),
            )
            for row in range(self.n_arms)
        ]

    def _check_arms(self, minimum: int, support: Optional[np.ndarray], what: str):
        rows = np.arange(self.n_arms) if support is None else np.asarray(support)
        lacking = rows[self.counts[rows] < minimum]
        if lacking.size:
            raise ReplicationError(
                f"{what} needs at least {minimum} unit(s) per arm, lacking",
                [self.label(row) for row in lacking],
            )

    def require_observed(
        self, support: Optional[np.ndarray] = None, what: str = "estimate"
    ):
        """Raise ReplicationError naming the empty arms among ``support`` rows."""

        self._check_arms(1, support, what)

    def require_replicated(
        self, support: Optional[np.ndarray] = None, what: str = "variance estimate"
    ):
        """Raise ReplicationError naming arms with fewer than two units."""

        self._check_arms(2, support, what)


class FactorialDataset:
    """Observed units (Z_i, Y_i) of a 2^K factorial experiment.

    Args:
        n_factors (int): K
        rows (npt.ArrayLike): r(Z_i) of each unit
        outcomes (npt.ArrayLike): Y_i of each unit
    """

    def __init__(self, n_factors: int, rows: npt.ArrayLike, outcomes: npt.ArrayLike):
        self.n_factors = check_factor_count(n_factors)
        self.rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        self.outcomes = np.asarray(outcomes, dtype=np.float64).reshape(-1)

        if self.rows.shape != self.outcomes.shape:
            raise InputError(
                f"Length mismatch: {self.rows.size} assignments, "
                f"{self.outcomes.size} outcomes"
            )
        if self.rows.size and (
            self.rows.min() < 0 or self.rows.max() >= 1 << n_factors
        ):
            raise InputError(f"Assignment rows must lie in [0, {1 << n_factors})")
        if not np.all(np.isfinite(self.outcomes)):
            raise InputError("Outcomes must be finite")

    @classmethod
    def from_units(
        cls,
        n_factors: int,
        units: Iterable[Tuple[Union[TreatmentLevel, str], float]],
    ) -> "FactorialDataset":
        """Build from ``(treatment, outcome)`` pairs; treatments may be 0/1 strings."""

        rows, outcomes = [], []
        for treatment, outcome in units:
            if isinstance(treatment, str):
                if len(treatment) != n_factors:
                    raise InputError(
                        f"Arm string {treatment!r} does not have {n_factors} digits"
                    )
                treatment = TreatmentLevel.from_string(treatment)
            rows.append(treatment.row(n_factors))
            outcomes.append(outcome)
        return cls(n_factors, rows, outcomes)

    @property
    def n_units(self) -> int:
        return int(self.rows.size)

    @property
    def treatments(self) -> List[TreatmentLevel]:
        return [TreatmentLevel.from_row(row, self.n_factors) for row in self.rows]

    @cached_property
    def summary(self) -> ArmSummaries:
        return summarize(self)

    @property
    def arms(self) -> List[ArmSummary]:
        return self.summary.arms


Data = Union[FactorialDataset, ArmSummaries]


def summary_of(data: Data) -> ArmSummaries:
    """Arm summaries of a dataset, or the summaries themselves."""

    return data.summary if isinstance(data, FactorialDataset) else data


def summarize(dataset: FactorialDataset) -> ArmSummaries:
    """Per-arm N(z), sample mean and sample variance (divisor N(z) - 1).

    Arms whose units all share one outcome get that outcome as their exact mean
    and a zero variance.

    Args:
        dataset (FactorialDataset): observed units

    Returns:
        ArmSummaries: per-arm summaries; use ``.vhat`` for diag(S(z,z)/N(z))
    """

    n_arms = 1 << dataset.n_factors
    rows, outcomes = dataset.rows, dataset.outcomes

    counts = np.bincount(rows, minlength=n_arms)
    sums = np.bincount(rows, weights=outcomes, minlength=n_arms)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan)

    lowest = np.full(n_arms, np.inf)
    highest = np.full(n_arms, -np.inf)
    np.minimum.at(lowest, rows, outcomes)
    np.maximum.at(highest, rows, outcomes)
    flat = (counts > 0) & (lowest == highest)
    means[flat] = lowest[flat]

    squares = np.bincount(rows, weights=(outcomes - means[rows]) ** 2, minlength=n_arms)
    squares[flat] = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        variances = np.where(counts >= 2, squares / (counts - 1), np.nan)

    return ArmSummaries(dataset.n_factors, counts, means, variances)


def t_ratio(value: float, se: float) -> float:
    """value / se; a zero se gives 0 for a zero value, else +-inf."""

    if se > 0:
        return value / se
    if value == 0:
        return 0.0
    return math.copysign(math.inf, value)


@dataclass(frozen=True)
class EffectEstimate:
    """Estimated factorial effect with its standard error."""

    factor_set: FactorSet
    tau_hat: float
    se: float

    @property
    def t_stat(self) -> float:
        return t_ratio(self.tau_hat, self.se)


@dataclass(frozen=True)
class WLSFit:
    """Unsaturated WLS fit of the arm means on the contrasts of a working model."""

    model: WorkingModel
    n_factors: int
    coefficients: np.ndarray
    covariance: Optional[np.ndarray] = None

    @property
    def standard_errors(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(len(self.model), np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def estimates(self) -> List[EffectEstimate]:
        return [
            EffectEstimate(factor_set, float(tau), float(se))
            for factor_set, tau, se in zip(
                self.model, self.coefficients, self.standard_errors
            )
        ]

    def estimate(self, factor_set: FactorSet) -> EffectEstimate:
        index = list(self.model).index(factor_set)
        return EffectEstimate(
            factor_set,
            float(self.coefficients[index]),
            float(self.standard_errors[index]),
        )

    @property
    def fitted_means(self) -> np.ndarray:
        """G(., M) tau_hat, the projection of the arm means onto the model span."""

        return effect_synthesis(self.coefficients, self.model, self.n_factors)


def _model_covariance(arm_variances: np.ndarray, model: WorkingModel, n_factors: int):
    columns = contrast_columns(model, n_factors)
    n_arms = 1 << n_factors
    return (columns * arm_variances[:, None]).T @ columns / n_arms**2


def wls_effects(
    data: Data, model: WorkingModel, covariance: Optional[str] = "direct"
) -> WLSFit:
    """WLS estimates of the factorial effects in a working model.

    Uses the closed form tau_hat = Q^-1 G(., M)^T Y_hat, evaluated with the fast
    effect transform, and the covariance estimator
    Q^-2 G(., M)^T V_hat G(., M) (``"direct"``) or its HC2 version (``"ehw"``).

    Args:
        data (Data): dataset or its arm summaries
        model (WorkingModel): effects to estimate
        covariance (Optional[str], optional): ``"direct"``, ``"ehw"`` or None to
            skip the covariance. Defaults to "direct".

    Raises:
        ReplicationError: an arm is empty, or has a single unit while a
            covariance is requested.

    Returns:
        WLSFit: coefficients and covariance, in model order
    """

    summary = summary_of(data)
    summary.require_observed(what="effect estimates")
    coefficients = effect_transform(summary.means, model, summary.n_factors)

    if covariance is None:
        matrix = None
    elif covariance == "direct":
        summary.require_replicated(what="effect covariance")
        matrix = _model_covariance(summary.vhat, model, summary.n_factors)
    elif covariance == "ehw":
        matrix = ehw_hc2_covariance(summary, model)
    else:
        raise InputError(
            f"Unexpected {covariance=}, expected one of {COVARIANCE_ESTIMATORS}"
        )

    return WLSFit(model, summary.n_factors, coefficients, matrix)


def ehw_hc2_covariance(data: Data, model: WorkingModel) -> np.ndarray:
    """EHW covariance estimate with the HC2 correction for a WLS fit.

    Replaces S(z,z) by S'(z,z) = S(z,z) + N(z)/(N(z)-1) (Y_hat(z) - G(z,M) tau_hat)^2
    in the direct estimator. It is never smaller (in the PSD order) than the
    direct estimator and equals it for the saturated model.

    Raises:
        ReplicationError: some arm has fewer than two units.
    """

    summary = summary_of(data)
    summary.require_replicated(what="EHW covariance")
    fit = wls_effects(summary, model, covariance=None)
    residuals = summary.means - fit.fitted_means
    counts = summary.counts
    adjusted = summary.variances + counts / (counts - 1) * residuals**2
    return _model_covariance(adjusted / counts, model, summary.n_factors)


def _unit_design(dataset: FactorialDataset, model: WorkingModel) -> np.ndarray:
    return contrast_columns(model, dataset.n_factors)[dataset.rows]


def wls_normal_equations(
    dataset: FactorialDataset, model: WorkingModel, weights: str = "inverse_count"
) -> np.ndarray:
    """Reference WLS solve on the unit-level design matrix.

    Solves (X^T W X) tau = X^T W Y with rows g_{i,M} and weights 1/N_i
    (``"inverse_count"``) or N/N_i (``"scaled"``). Much slower than
    :func:`wls_effects`; meant for cross-checking it.
    """

    counts = dataset.summary.counts[dataset.rows].astype(np.float64)
    if weights == "inverse_count":
        unit_weights = 1.0 / counts
    elif weights == "scaled":
        unit_weights = dataset.n_units / counts
    else:
        raise InputError(f"Unexpected {weights=}")

    design = _unit_design(dataset, model)
    weighted = design * unit_weights[:, None]
    return np.linalg.solve(weighted.T @ design, weighted.T @ dataset.outcomes)


def ehw_hc2_sandwich(dataset: FactorialDataset, model: WorkingModel) -> np.ndarray:
    """Reference HC2 sandwich computed from the unit-level regression.

    (X^T W X)^-1 X^T W diag(e_i^2 / (1 - 1/N_i)) W X (X^T W X)^-1
    """

    counts = dataset.summary.counts[dataset.rows].astype(np.float64)
    unit_weights = 1.0 / counts
    design = _unit_design(dataset, model)
    residuals = dataset.outcomes - design @ wls_normal_equations(dataset, model)

    bread = np.linalg.inv((design * unit_weights[:, None]).T @ design)
    scaled = design * (unit_weights * residuals / np.sqrt(1.0 - 1.0 / counts))[:, None]
    return bread @ (scaled.T @ scaled) @ bread


def as_weight_vector(values: npt.ArrayLike, n_factors: int) -> np.ndarray:
    """Validate a weighting vector f indexed by r(z)."""

    weights = np.asarray(values, dtype=np.float64).reshape(-1)
    if weights.size != 1 << n_factors:
        raise InputError(
            f"Length mismatch: weighting vector has {weights.size} entries, "
            f"expected {1 << n_factors}"
        )
    if not np.all(np.isfinite(weights)):
        raise InputError("Weighting vector entries must be finite")
    if not np.any(weights):
        raise InputError("Weighting vector must have at least one nonzero entry")
    return weights


def _support(weights: np.ndarray) -> np.ndarray:
    scale = np.abs(weights).max(initial=0.0)
    return np.flatnonzero(np.abs(weights) > 1e-12 * scale)


@dataclass(frozen=True)
class Inference:
    """Point estimate, variance estimate and Wald interval for gamma = f^T Y_bar.

    ``weights`` holds the vector actually applied to the arm means: f itself
    for the plug-in estimator, f[M] for restricted least squares.
    """

    method: str
    estimate: float
    variance: float
    alpha: float
    weights: np.ndarray = field(repr=False)

    @property
    def se(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    @property
    def ci(self) -> Tuple[float, float]:
        return wald_interval(self.estimate, self.se, self.alpha)

    @property
    def ci_length(self) -> float:
        low, high = self.ci
        return high - low

    @property
    def z_stat(self) -> float:
        return t_ratio(self.estimate, self.se)

    @property
    def p_value(self) -> float:
        return 2.0 * normal_cdf(-abs(self.z_stat))

    def rejects(self, null: float = 0.0) -> bool:
        """Two-sided level-alpha Wald test of gamma = ``null``."""

        return abs(t_ratio(self.estimate - null, self.se)) >= critical_value(self.alpha)

    def covers(self, value: float) -> bool:
        low, high = self.ci
        return low <= value <= high

    def to_record(self, target: str, model: Optional[WorkingModel] = None) -> dict:
        low, high = self.ci
        return {
            "target": target,
            "gamma_hat": self.estimate,
            "se": self.se,
            "ci_lo": low,
            "ci_hi": high,
            "model": None if model is None else model.to_list(),
            "method": self.method,
        }


def _linear_inference(
    summary: ArmSummaries, weights: np.ndarray, alpha: float, method: str
) -> Inference:
    support = _support(weights)
    summary.require_replicated(support, what=f"{method} estimate")
    applied = weights[support]
    estimate = float(applied @ summary.means[support])
    variance = float(applied**2 @ summary.vhat[support])
    return Inference(method, estimate, variance, alpha, weights)


def plug_in_estimate(
    f: npt.ArrayLike, data: Data, alpha: float = DEFAULT_ALPHA
) -> Inference:
    """Plug-in estimator gamma_hat = f^T Y_hat with v_hat^2 = sum f(z)^2 S(z,z)/N(z).

    Args:
        f (npt.ArrayLike): weighting vector indexed by r(z)
        data (Data): dataset or arm summaries
        alpha (float, optional): CI level is 1 - alpha. Defaults to 0.05.

    Raises:
        ReplicationError: an arm with nonzero weight has fewer than two units.

    Returns:
        Inference: estimate, variance and Wald interval
    """

    summary = summary_of(data)
    return _linear_inference(
        summary, as_weight_vector(f, summary.n_factors), alpha, method="plugin"
    )


def project_weight(
    f: npt.ArrayLike, model: WorkingModel, n_factors: Optional[int] = None
) -> np.ndarray:
    """f[M] = Q^-1 G(., M) G(., M)^T f, the projection of f onto the model span.

    ``f`` may also be a Q x L array, in which case every column is projected.
    """

    values = np.asarray(f, dtype=np.float64)
    if n_factors is None:
        n_factors = factor_count_of(values.shape[0])
    coefficients = effect_transform(values, model, n_factors)
    return effect_synthesis(coefficients, model, n_factors)


def rls_fitted_means(data: Data, model: WorkingModel) -> np.ndarray:
    """Restricted least squares arm means Y_hat_R = Q^-1 G(., M) G(., M)^T Y_hat."""

    return wls_effects(data, model, covariance=None).fitted_means


def rls_estimate(
    f: npt.ArrayLike,
    model: WorkingModel,
    data: Data,
    alpha: float = DEFAULT_ALPHA,
    method: str = "rls",
) -> Inference:
    """Restricted least squares estimator gamma_hat_R = f[M]^T Y_hat.

    The variance estimate is f[M]^T V_hat f[M]. With the saturated model this
    reduces to :func:`plug_in_estimate`.

    Args:
        f (npt.ArrayLike): weighting vector indexed by r(z)
        model (WorkingModel): selected working model
        data (Data): dataset or arm summaries
        alpha (float, optional): CI level is 1 - alpha. Defaults to 0.05.
        method (str, optional): label of the estimate (``rls``, ``rls_under``,
            ``rls_over``). Defaults to "rls".

    Raises:
        ReplicationError: an arm with nonzero projected weight has fewer than two
            units (the projected weight is generally dense).

    Returns:
        Inference: estimate, variance and Wald interval
    """

    summary = summary_of(data)
    weights = as_weight_vector(f, summary.n_factors)
    projected = project_weight(weights, model, summary.n_factors)
    return _linear_inference(summary, projected, alpha, method)


@dataclass(frozen=True)
class VectorInference:
    """RLS estimates of Gamma = F^T Y_bar with their joint covariance estimate."""

    estimates: np.ndarray
    covariance: np.ndarray
    weights: np.ndarray = field(repr=False)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _as_weight_matrix(
    weights: Union[npt.ArrayLike, Sequence[npt.ArrayLike]], n_factors: int
):
    matrix = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    for row in matrix:
        as_weight_vector(row, n_factors)
    return matrix


def rls_vector_estimate(
    weights: Union[npt.ArrayLike, Sequence[npt.ArrayLike]],
    model: WorkingModel,
    data: Data,
) -> VectorInference:
    """Vector version of :func:`rls_estimate`.

    Returns Gamma_hat_R = F[M]^T Y_hat and V_hat = F[M]^T V_hat_Y F[M].

    Args:
        weights: L weighting vectors, as an L x Q array or a list
        model (WorkingModel): selected working model
        data (Data): dataset or arm summaries

    Returns:
        VectorInference: length-L estimates and L x L covariance
    """

    summary = summary_of(data)
    matrix = _as_weight_matrix(weights, summary.n_factors)
    projected = project_weight(matrix.T, model, summary.n_factors).T

    support = _support(np.abs(projected).max(axis=0))
    summary.require_replicated(support, what="rls vector estimate")
    applied = projected[:, support]
    estimates = applied @ summary.means[support]
    covariance = (applied * summary.vhat[support]) @ applied.T
    return VectorInference(estimates, covariance, projected)


@dataclass(frozen=True)
class EfficiencyDiagnostic:
    """How much an RLS estimate can gain over the plug-in one.

    ``projection_ratio`` is ||f[M]||^2 / ||f||^2 and is bounded by
    ``sparsity * model_size / n_arms``; ``bound`` multiplies that by the
    condition number of the estimated arm-mean covariance and bounds the
    variance ratio of the two estimators.
    """

    projection_ratio: float
    sparsity: int
    model_size: int
    n_arms: int
    condition_number: float
    bound: float

    @property
    def ratio_bound(self) -> float:
        return self.sparsity * self.model_size / self.n_arms


def efficiency_bound(
    f: npt.ArrayLike, model: WorkingModel, data: Data
) -> EfficiencyDiagnostic:
    """Efficiency diagnostics of the RLS estimator against the plug-in one.

    Raises:
        ReplicationError: some arm has fewer than two units.
    """

    summary = summary_of(data)
    weights = as_weight_vector(f, summary.n_factors)
    summary.require_replicated(what="efficiency diagnostic")

    projected = project_weight(weights, model, summary.n_factors)
    ratio = float(projected @ projected / (weights @ weights))
    sparsity = int(np.count_nonzero(weights))

    vhat = summary.vhat
    condition = math.inf if vhat.min() <= 0 else float(vhat.max() / vhat.min())
    bound = condition * sparsity * len(model) / summary.n_arms
    return EfficiencyDiagnostic(
        ratio, sparsity, len(model), summary.n_arms, condition, bound
    )


def orthogonality_gap(f: npt.ArrayLike, n_factors: int, max_level: int) -> float:
    """Norm of the component of f along contrasts of level above ``max_level``.

    The under-selection estimator stays consistent only for weighting vectors
    orthogonal to the excluded higher-order contrasts, i.e. a zero gap.
    """

    weights = as_weight_vector(f, n_factors)
    coefficients = effect_transform(weights, n_factors=n_factors)
    levels = np.bitwise_count(canonical_masks(n_factors))
    excluded = coefficients[levels > max_level]
    return math.sqrt((1 << n_factors) * float(excluded @ excluded))
