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

"""Science tables, complete randomization and the Monte Carlo harness.

A science table fixes every potential outcome Y_i(z); randomness comes only from
which arm each unit is assigned to. The harness draws a fresh table and
assignment per replicate, runs the screening methods and records how well the
plug-in and RLS estimators of a target do.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
import yaml
from joblib import Parallel, delayed
from more_itertools import chunked, distinct_permutations
from tqdm import tqdm

from .design import (
    FactorSet,
    Heredity,
    TreatmentLevel,
    WorkingModel,
    canonical_masks,
    check_factor_count,
    effect_synthesis,
    effect_transform,
    factor_count_of,
    obeys_heredity,
)
from .errors import EnumerationTooLargeError, InputError
from .estimation import (
    DEFAULT_ALPHA,
    FactorialDataset,
    plug_in_estimate,
    rls_estimate,
)
from .screening import ScreeningConfig, forward_screen, naive_screen
from .selectors import BonferroniTSelector, LassoSelector

logger = logging.getLogger(__name__)

SCHEMA = "factorial-screen/1"

DGPS = ("shifted_exponential", "normal", "constant")

METHODS = ("forward-bonferroni", "forward-lasso", "naive-bonferroni", "naive-lasso")

ESTIMATORS = ("plugin", "rls")

METRICS = (
    "perfect_screening",
    "model_size",
    "heredity_violation",
    "power",
    "coverage",
    "ci_length",
    "variance",
)

# Metrics of the selected model do not depend on the estimator
SCREENING_METRICS = ("perfect_screening", "model_size", "heredity_violation")

MAX_ENUMERATION = 1_000_000

DEFAULT_ACTIVE = 5

TABLE_COLUMNS = ["n0", "effect_size", "method", "estimator", "metric", "value", "mc_se"]


@dataclass(frozen=True)
class ScienceTable:
    """Potential outcomes Y_i(z) of N units, one column per arm in r(z) order.

    Args:
        outcomes (np.ndarray): N x Q matrix
        mu (Optional[np.ndarray]): population mean vector the table was drawn
            around, if known
    """

    outcomes: np.ndarray
    mu: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        outcomes = np.atleast_2d(np.asarray(self.outcomes, dtype=np.float64))
        factor_count_of(outcomes.shape[1])
        if not np.all(np.isfinite(outcomes)):
            raise InputError("Potential outcomes must be finite")
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_arms(self) -> int:
        return self.outcomes.shape[1]

    @property
    def n_factors(self) -> int:
        return factor_count_of(self.n_arms)

    @cached_property
    def means(self) -> np.ndarray:
        """Finite-population arm means Y_bar(z)."""

        return self.outcomes.mean(axis=0)

    @cached_property
    def covariance(self) -> np.ndarray:
        """Finite-population covariance S of the potential outcomes (divisor N - 1)."""

        if self.n_units < 2:
            raise InputError("The covariance of potential outcomes needs N >= 2 units")
        centered = self.outcomes - self.means
        return centered.T @ centered / (self.n_units - 1)

    @cached_property
    def effects(self) -> np.ndarray:
        """True factorial effects Q^-1 G^T Y_bar, in canonical order."""

        return effect_transform(self.means)

    def target(self, f: npt.ArrayLike) -> float:
        """gamma = f^T Y_bar."""

        return float(np.asarray(f, dtype=np.float64) @ self.means)

    def design_covariance(self, design: "DesignSpec") -> np.ndarray:
        """D_Y = diag(S(z,z) / N(z))."""

        design.check(self.n_factors, self.n_units)
        return np.diag(np.diag(self.covariance) / design.counts)

    def sampling_covariance(self, design: "DesignSpec") -> np.ndarray:
        """Covariance V_Y = D_Y - S / N of the arm means under randomization."""

        return self.design_covariance(design) - self.covariance / self.n_units

    def true_model(self, tolerance: float = 1e-9) -> WorkingModel:
        """Effects that are nonzero in ``mu`` (or in the table means without ``mu``)."""

        values = self.means if self.mu is None else self.mu
        effects = effect_transform(values)
        scale = max(np.abs(effects).max(initial=0.0), 1.0)
        masks = canonical_masks(self.n_factors)
        return WorkingModel(
            FactorSet(mask)
            for mask, tau in zip(masks, effects)
            if abs(tau) > tolerance * scale
        )


@dataclass(frozen=True)
class DesignSpec:
    """Completely randomized design with N(z) units in arm z (indexed by r(z))."""

    counts: Tuple[int, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        counts = tuple(int(count) for count in self.counts)
        factor_count_of(len(counts))
        if any(count < 0 for count in counts):
            raise InputError(f"Arm counts must be >= 0, got {counts}")
        if sum(counts) == 0:
            raise InputError("The design assigns no units")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(
        cls, n_factors: int, n0: int, seed: Optional[int] = None
    ) -> "DesignSpec":
        """N0 units in every arm."""

        return cls((n0,) * (1 << check_factor_count(n_factors)), seed)

    @property
    def n_units(self) -> int:
        return sum(self.counts)

    @property
    def n_factors(self) -> int:
        return factor_count_of(len(self.counts))

    def check(self, n_factors: int, n_units: Optional[int] = None) -> "DesignSpec":
        if self.n_factors != n_factors:
            raise InputError(
                f"Design is for K={self.n_factors}, expected K={n_factors}"
            )
        if n_units is not None and self.n_units != n_units:
            raise InputError(f"Arm counts sum to {self.n_units}, expected N={n_units}")
        return self


def mu_from_effects(effects: Mapping[FactorSet, float], n_factors: int) -> np.ndarray:
    """Mean vector mu = G tau for an effect map; effects not listed are zero.

    Example, a single main effect:

    .. code-block:: python

        mu_from_effects({FactorSet.from_factors([1]): 1.0}, 1)
        # array([-1.,  1.])
    """

    model = WorkingModel(effects)
    coefficients = np.zeros(len(model))
    for factor_set, value in effects.items():
        coefficients[list(model).index(factor_set)] += value
    return effect_synthesis(coefficients, model, n_factors)


def structured_effects(
    n_factors: int, size: float, active: int = 5, max_level: int = 2
) -> Dict[FactorSet, float]:
    """Every effect of level 1..``max_level`` among the first ``active`` factors.

    All of them are set to ``size``.
    """

    check_factor_count(n_factors)
    if not 0 <= active <= n_factors:
        raise InputError(f"Unexpected {active=} for K={n_factors}")

    masks = range(1, 1 << active)
    return {
        FactorSet(mask): float(size)
        for mask in masks
        if FactorSet(mask).level <= max_level
    }


def gen_science_table(
    mu: npt.ArrayLike,
    n_units: int,
    rng: np.random.Generator,
    dgp: str = "shifted_exponential",
    noise_scale: float = 1.0,
) -> ScienceTable:
    """Draw Y_i(z) = mu(z) + noise_scale * e_iz, independent across units and arms.

    ``e`` follows EXP(1) - 1 (``shifted_exponential``), N(0, 1) (``normal``)
    or is zero (``constant``).
    """

    mu = np.asarray(mu, dtype=np.float64)
    factor_count_of(mu.size)
    if n_units < 1:
        raise InputError(f"Unexpected {n_units=}, expected N >= 1")

    shape = (n_units, mu.size)
    if dgp == "shifted_exponential":
        noise = rng.exponential(1.0, size=shape) - 1.0
    elif dgp == "normal":
        noise = rng.standard_normal(shape)
    elif dgp == "constant":
        noise = np.zeros(shape)
    else:
        raise InputError(f"Unexpected {dgp=}, expected one of {DGPS}")
    return ScienceTable(mu + noise_scale * noise, mu)


def assign(
    design: DesignSpec, rng: np.random.Generator, n_units: Optional[int] = None
) -> np.ndarray:
    """Complete randomization: a uniform permutation of the arm labels.

    Args:
        design (DesignSpec): arm counts N(z)
        rng (np.random.Generator): random source
        n_units (Optional[int], optional): N to check the counts against.

    Raises:
        InputError: the counts do not sum to ``n_units``.

    Returns:
        np.ndarray: r(Z_i) of each unit
    """

    if n_units is not None:
        design.check(design.n_factors, n_units)
    labels = np.repeat(np.arange(len(design.counts)), design.counts)
    return rng.permutation(labels)


def reveal(science: ScienceTable, assignment: npt.ArrayLike) -> FactorialDataset:
    """Observed dataset Y_i = Y_i(Z_i)."""

    rows = np.asarray(assignment, dtype=np.int64).reshape(-1)
    if rows.size != science.n_units:
        raise InputError(
            f"Length mismatch: {rows.size} assignments for {science.n_units} units"
        )
    if rows.size and (rows.min() < 0 or rows.max() >= science.n_arms):
        raise InputError(f"Assignment rows must lie in [0, {science.n_arms})")
    outcomes = science.outcomes[np.arange(rows.size), rows]
    return FactorialDataset(science.n_factors, rows, outcomes)


@dataclass(frozen=True)
class AssignmentMoments:
    """Exact moments over every distinct assignment of a design.

    ``vhat_mean`` is the average of diag(S_hat(z,z)/N(z)); ``effect_means``
    maps each requested model to the average of its WLS coefficients.
    """

    n_assignments: int
    mean: np.ndarray
    covariance: np.ndarray
    vhat_mean: np.ndarray
    effect_means: Dict[WorkingModel, np.ndarray]


def assignment_count(counts: Sequence[int]) -> int:
    """Multinomial coefficient N! / prod N(z)!."""

    total, remaining = 1, 0
    for count in counts:
        remaining += count
        total *= math.comb(remaining, count)
    return total


def enumerate_assignments(
    science: ScienceTable,
    design: DesignSpec,
    models: Sequence[WorkingModel] = (),
    limit: int = MAX_ENUMERATION,
    chunk_size: int = 4096,
) -> AssignmentMoments:
    """Exact expectations under complete randomization by visiting every assignment.

    Args:
        science (ScienceTable): fixed potential outcomes
        design (DesignSpec): arm counts, every arm needs a unit
        models (Sequence[WorkingModel], optional): models whose mean WLS
            coefficients are wanted. Defaults to ().
        limit (int, optional): largest number of assignments to visit.

    Raises:
        EnumerationTooLargeError: more than ``limit`` distinct assignments.

    Returns:
        AssignmentMoments: E[Y_hat], Var(Y_hat), E[V_hat] and E[tau_hat(M)]
    """

    design.check(science.n_factors, science.n_units)
    counts = np.asarray(design.counts)
    if np.any(counts < 1):
        raise InputError("Exact enumeration needs at least one unit per arm")
    total = assignment_count(design.counts)
    if total > limit:
        raise EnumerationTooLargeError(
            f"Design has {total} distinct assignments, more than the limit {limit}"
        )

    n_arms = science.n_arms
    units = np.arange(science.n_units)
    center = science.means
    labels = np.repeat(np.arange(n_arms), counts)

    first = np.zeros(n_arms)
    second = np.zeros((n_arms, n_arms))
    vhat_sum = np.zeros(n_arms)
    effect_sums = {model: np.zeros(len(model)) for model in models}

    for chunk in chunked(distinct_permutations(labels.tolist()), chunk_size):
        rows = np.asarray(chunk)
        observed = science.outcomes[units, rows]
        members = rows[:, :, None] == np.arange(n_arms)

        means = (observed[:, :, None] * members).sum(axis=1) / counts
        residuals = observed[:, :, None] - means[:, None, :]
        squares = (residuals**2 * members).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            vhat = np.where(counts >= 2, squares / (counts - 1) / counts, np.nan)

        deviation = means - center
        first += deviation.sum(axis=0)
        second += deviation.T @ deviation
        vhat_sum += vhat.sum(axis=0)
        for model, sums in effect_sums.items():
            sums += effect_transform(means.T, model, science.n_factors).sum(axis=1)

    shift = first / total
    covariance = second / total - np.outer(shift, shift)
    logger.debug("enumerated %d assignments", total)
    return AssignmentMoments(
        total,
        center + shift,
        covariance,
        vhat_sum / total,
        {model: sums / total for model, sums in effect_sums.items()},
    )


def _decode_effects(entries: Any) -> Dict[FactorSet, float]:
    """Effects given as a list of ``{"set": [1, 2], "value": 0.4}`` entries."""

    effects: Dict[FactorSet, float] = {}
    for entry in entries:
        factor_set = FactorSet.from_factors(entry["set"])
        effects[factor_set] = effects.get(factor_set, 0.0) + float(entry["value"])
    return effects


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo study settings.

    The grid is every (N0, effect size) pair. At each point the population mean
    vector is ``effect_size`` times a base pattern: the structured effects
    (``active`` factors, levels up to ``effect_level``, all equal to 1), the
    explicit ``effects`` entries, or the custom ``means``.

    Args:
        n_factors (int): K
        n0_grid (Tuple[int, ...]): units per arm
        effect_sizes (Tuple[float, ...]): multipliers of the base pattern
        replications (int): R replicates per grid point
        seed (Optional[int]): root seed; drawn and recorded when None
        dgp (str): noise distribution of the science table
        noise_scale (float): noise standard deviation multiplier
        active (Optional[int]): factors carrying the structured effects;
            min(5, K) when None
        effect_level (int): deepest level of the structured effects
        effects (Optional[Tuple[dict, ...]]): explicit effect entries
            ``{"set": [...], "value": ...}``
        means (Optional[Tuple[float, ...]]): custom length-Q base means
        levels (int): screening depth D
        alpha (float): screening significance level of every level
        heredity (str): weak or strong
        lasso_penalty (Optional[float]): lambda of the lasso methods
        methods (Tuple[str, ...]): screening methods
        estimators (Tuple[str, ...]): estimators of the target
        metrics (Tuple[str, ...]): metrics to record
        target (Optional[str]): arm whose mean is estimated; all-ones arm when
            None
        alpha_ci (float): 1 - confidence level
        n_jobs (int): joblib workers
    """

    n_factors: int = 8
    n0_grid: Tuple[int, ...] = (2, 4, 6, 8)
    effect_sizes: Tuple[float, ...] = (0.1, 0.2, 0.4, 0.8)
    replications: int = 1000
    seed: Optional[int] = None
    dgp: str = "shifted_exponential"
    noise_scale: float = 1.0
    active: Optional[int] = None
    effect_level: int = 2
    effects: Optional[Tuple[dict, ...]] = None
    means: Optional[Tuple[float, ...]] = None
    levels: int = 2
    alpha: float = DEFAULT_ALPHA
    heredity: str = "strong"
    lasso_penalty: Optional[float] = None
    methods: Tuple[str, ...] = METHODS
    estimators: Tuple[str, ...] = ESTIMATORS
    metrics: Tuple[str, ...] = METRICS
    target: Optional[str] = None
    alpha_ci: float = DEFAULT_ALPHA
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("n0_grid", "effect_sizes", "methods", "estimators", "metrics"):
            value = getattr(self, name)
            value = (value,) if np.isscalar(value) else tuple(value)
            object.__setattr__(self, name, value)
        if self.means is not None:
            object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        if self.effects is not None:
            effects = tuple(dict(entry) for entry in self.effects)
            object.__setattr__(self, "effects", effects)

        problems = self._problems()
        if problems:
            raise InputError("Invalid simulation config: " + "; ".join(problems))

    def _problems(self) -> List[str]:
        problems = []
        try:
            check_factor_count(self.n_factors)
        except InputError as err:
            problems.append(str(err))
        if not self.n0_grid or any(int(n0) < 2 for n0 in self.n0_grid):
            problems.append(f"n0_grid needs values >= 2, got {self.n0_grid}")
        if not self.effect_sizes:
            problems.append("effect_sizes is empty")
        if self.replications < 1:
            problems.append(f"replications must be >= 1, got {self.replications}")
        if self.dgp not in DGPS:
            problems.append(f"dgp must be one of {DGPS}, got {self.dgp!r}")
        if self.noise_scale < 0:
            problems.append(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.effects is None and self.means is None:
            if not 0 <= self.active_factors <= self.n_factors:
                problems.append(f"active must lie in [0, K], got {self.active}")
            if self.effect_level < 1:
                problems.append(f"effect_level must be >= 1, got {self.effect_level}")
        if self.effects is not None and self.means is not None:
            problems.append("give at most one of effects and means")
        if self.means is not None and len(self.means) != 1 << self.n_factors:
            problems.append(
                f"means needs {1 << self.n_factors} entries, got {len(self.means)}"
            )
        if self.effects is not None:
            try:
                for factor_set in _decode_effects(self.effects):
                    factor_set.check(self.n_factors)
            except (KeyError, TypeError, ValueError) as err:
                problems.append(f"effects entries need 'set' and 'value': {err}")
        if not 1 <= self.levels <= self.n_factors:
            problems.append(f"levels must lie in [1, K], got {self.levels}")
        if not 0 < self.alpha <= 1:
            problems.append(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.heredity not in {mode.value for mode in Heredity}:
            problems.append(f"heredity must be weak or strong, got {self.heredity!r}")
        if self.lasso_penalty is not None and self.lasso_penalty < 0:
            problems.append(f"lasso_penalty must be >= 0, got {self.lasso_penalty}")
        for name, allowed in (
            ("methods", METHODS),
            ("estimators", ESTIMATORS),
            ("metrics", METRICS),
        ):
            unknown = sorted(set(getattr(self, name)) - set(allowed))
            if unknown:
                problems.append(
                    f"unknown {name} {unknown}, expected a subset of {allowed}"
                )
        if self.target is not None:
            try:
                TreatmentLevel.from_string(self.target)
            except InputError as err:
                problems.append(str(err))
            if len(self.target) != self.n_factors:
                problems.append(f"target arm must have {self.n_factors} digits")
        if not 0 < self.alpha_ci < 1:
            problems.append(f"alpha_ci must lie in (0, 1), got {self.alpha_ci}")
        return problems

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "SimulationConfig":
        """Build from a parsed YAML/JSON mapping, rejecting unknown keys."""

        if not isinstance(mapping, Mapping):
            raise InputError(
                f"Simulation config must be a mapping, got {type(mapping).__name__}"
            )
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InputError(f"Invalid simulation config: unknown fields {unknown}")
        try:
            return cls(**mapping)
        except TypeError as err:
            raise InputError(f"Invalid simulation config: {err}") from err

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SimulationConfig":
        """Read a YAML (or JSON) config file."""

        try:
            with open(path, encoding="utf-8") as stream:
                mapping = yaml.safe_load(stream)
        except OSError as err:
            raise InputError(f"Cannot read simulation config {path}: {err}") from err
        except yaml.YAMLError as err:
            raise InputError(f"Cannot parse simulation config {path}: {err}") from err
        return cls.from_mapping(mapping or {})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def defaults_used(self) -> List[str]:
        """Fields left at their built-in default."""

        return [
            f.name
            for f in fields(self)
            if f.name != "seed" and getattr(self, f.name) == f.default
        ]

    @property
    def active_factors(self) -> int:
        if self.active is None:
            return min(DEFAULT_ACTIVE, self.n_factors)
        return self.active

    @property
    def target_arm(self) -> str:
        return self.target or "1" * self.n_factors

    def target_weights(self) -> np.ndarray:
        weights = np.zeros(1 << self.n_factors)
        weights[TreatmentLevel.from_string(self.target_arm).row(self.n_factors)] = 1.0
        return weights

    def base_means(self) -> np.ndarray:
        if self.means is not None:
            return np.asarray(self.means)
        if self.effects is not None:
            return mu_from_effects(_decode_effects(self.effects), self.n_factors)
        return mu_from_effects(
            structured_effects(
                self.n_factors, 1.0, self.active_factors, self.effect_level
            ),
            self.n_factors,
        )

    def screening(self, method: str) -> ScreeningConfig:
        if method.endswith("lasso"):
            s_step = LassoSelector(self.lasso_penalty)
        else:
            s_step = BonferroniTSelector()
        return ScreeningConfig(
            max_level=self.levels,
            alphas=(self.alpha,),
            heredity=self.heredity,
            s_step=s_step,
            alpha_ci=self.alpha_ci,
        )


@dataclass(frozen=True)
class MonteCarloResult:
    """Tidy metric table plus the run manifest."""

    table: pd.DataFrame
    manifest: dict


def _versions() -> Dict[str, str]:
    versions = {}
    for package in ("factorial-screen", "numpy", "scipy", "pandas"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def _replicate(
    config: SimulationConfig,
    seed: int,
    point: Tuple[int, int, float],
    replicate: int,
    mu: np.ndarray,
    true_model: WorkingModel,
) -> List[tuple]:
    index, n0, size = point
    stream = np.random.SeedSequence(seed, spawn_key=(index, replicate))
    rng = np.random.default_rng(stream)
    design = DesignSpec.uniform(config.n_factors, n0)

    science = gen_science_table(
        size * mu, design.n_units, rng, config.dgp, config.noise_scale
    )
    data = reveal(science, assign(design, rng))
    weights = config.target_weights()
    truth = science.target(weights)

    records = []
    for method in config.methods:
        screening = config.screening(method)
        screen = forward_screen if method.startswith("forward") else naive_screen
        model = screen(data, screening).model

        values = {
            "perfect_screening": float(model == true_model),
            "model_size": float(len(model)),
            "heredity_violation": float(not obeys_heredity(model, config.heredity)),
        }
        for metric in config.metrics:
            if metric in SCREENING_METRICS:
                records.append((method, "screening", metric, values[metric]))

        for estimator in config.estimators:
            if estimator == "plugin":
                inference = plug_in_estimate(weights, data, config.alpha_ci)
            else:
                inference = rls_estimate(weights, model, data, config.alpha_ci)
            values = {
                "power": float(inference.rejects()),
                "coverage": float(inference.covers(truth)),
                "ci_length": inference.ci_length,
                "variance": inference.variance,
            }
            for metric in config.metrics:
                if metric not in SCREENING_METRICS:
                    records.append((method, estimator, metric, values[metric]))
    return [(index, replicate) + record for record in records]


def run_monte_carlo(
    config: SimulationConfig, progress: bool = False
) -> MonteCarloResult:
    """Run the Monte Carlo study over the (N0, effect size) grid.

    Replicate r at grid point g uses the random stream
    ``SeedSequence(seed, spawn_key=(g, r))``, so results do not depend on
    ``n_jobs``. Each replicate draws its own science table, so coverage and
    power refer to that replicate's finite-population target.

    Args:
        config (SimulationConfig): study settings
        progress (bool, optional): show a progress bar. Defaults to False.

    Returns:
        MonteCarloResult: one row per (n0, effect_size, method, estimator,
            metric) with the replicate mean and its Monte Carlo standard error,
            plus a manifest
    """

    seed = config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
        logger.info("no seed given, using %d", seed)

    base = config.base_means()
    true_models = {
        float(size): ScienceTable((size * base)[None, :], size * base).true_model()
        for size in config.effect_sizes
    }
    grid = [
        (index, int(n0), float(size))
        for index, (n0, size) in enumerate(
            (n0, size) for n0 in config.n0_grid for size in config.effect_sizes
        )
    ]

    rows = []
    with Parallel(n_jobs=config.n_jobs) as parallel:
        for point in tqdm(grid, disable=not progress, desc="grid points"):
            logger.info("grid point n0=%d effect_size=%g", point[1], point[2])
            results = parallel(
                delayed(_replicate)(
                    config, seed, point, replicate, base, true_models[point[2]]
                )
                for replicate in range(config.replications)
            )
            rows.extend(record for result in results for record in result)

    replicates = pd.DataFrame(
        rows, columns=["point", "replicate", "method", "estimator", "metric", "value"]
    ).sort_values(["point", "replicate"], kind="stable")
    table = _summarize_replicates(replicates, grid)

    manifest = {
        "schema": SCHEMA,
        "seed": seed,
        "config": {**config.to_dict(), "seed": seed},
        "defaults": config.defaults_used,
        "true_models": [
            {"n0": n0, "effect_size": size, "model": true_models[size].to_list()}
            for _, n0, size in grid
        ],
        "target": config.target_arm,
        "versions": _versions(),
    }
    return MonteCarloResult(table, manifest)


def _summarize_replicates(replicates: pd.DataFrame, grid: List[Tuple[int, int, float]]):
    keys = ["point", "method", "estimator", "metric"]
    summary = (
        replicates.groupby(keys, sort=False)["value"]
        .agg(value="mean", mc_se="sem")
        .reset_index()
    )
    points = pd.DataFrame(grid, columns=["point", "n0", "effect_size"])
    summary = summary.merge(points, on="point").sort_values(keys, kind="stable")
    return summary[TABLE_COLUMNS].reset_index(drop=True)


def metric_lookup(table: pd.DataFrame, **where: Any) -> pd.DataFrame:
    """Rows of a metric table matching every ``column=value`` pair."""

    mask = np.ones(len(table), dtype=bool)
    for column, value in where.items():
        mask &= (table[column] == value).to_numpy()
    return table[mask]
