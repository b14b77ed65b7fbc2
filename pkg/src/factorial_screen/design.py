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

"""Bit-level representation of factorial designs.

Factors are numbered ``1..K``. A subset of factors (indexing one factorial
effect) and a treatment combination are both stored as integer bitmasks where
bit ``k - 1`` stands for factor ``k``.

Length-Q vectors indexed by treatment (arm means, weights, variances) are laid
out by the lexicographic row index ``r(z)``, in which ``z_1`` is the most
significant digit, so that ``r`` is the integer value of the 0/1 string
``"z_1 z_2 ... z_K"``. Length-Q vectors indexed by effect (factorial effects)
follow the canonical effect order: by level, then by mask.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union, overload

import numpy as np
import numpy.typing as npt

from .errors import InputError

MAX_FACTORS = 20
"""Largest supported K for length-Q vector operations (Q ~ 1e6 doubles)."""

MAX_DENSE_FACTORS = 16
"""Largest supported K for the dense Q x Q contrast matrix (int8 entries)."""


def check_factor_count(n_factors: int, cap: int = MAX_FACTORS) -> int:
    """Validate a factor count.

    Raises:
        InputError: ``n_factors`` is not an integer in ``[1, cap]``.
    """

    if isinstance(n_factors, bool) or not isinstance(n_factors, (int, np.integer)):
        raise InputError(f"Unexpected {type(n_factors)=}, factor count must be int")
    if not 1 <= n_factors <= cap:
        raise InputError(f"Unexpected {n_factors=}, expected 1 <= K <= {cap}")
    return int(n_factors)


def factor_count_of(length: int) -> int:
    """Recover K from a vector length Q = 2^K."""

    if length < 2 or length & (length - 1):
        raise InputError(f"Vector length must be 2^K with K >= 1, got {length=}")
    return check_factor_count(length.bit_length() - 1)


@dataclass(frozen=True)
class FactorSet:
    """A subset of factors, i.e. the index of one factorial effect.

    The empty set stands for the intercept.
    """

    mask: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mask", int(self.mask))
        if self.mask < 0:
            raise InputError(f"Unexpected {self.mask=}, masks are non-negative")

    @classmethod
    def from_factors(cls, factors: Iterable[int]) -> "FactorSet":
        """Build from 1-based factor indices, e.g. ``[1, 3]``."""

        mask = 0
        for factor in factors:
            if isinstance(factor, bool) or int(factor) != factor or factor < 1:
                raise InputError(f"Unexpected {factor=}, factors are numbered from 1")
            mask |= 1 << (int(factor) - 1)
        return cls(mask)

    @property
    def level(self) -> int:
        return self.mask.bit_count()

    @property
    def factors(self) -> Tuple[int, ...]:
        return tuple(k + 1 for k in range(self.mask.bit_length()) if self.mask >> k & 1)

    @property
    def sort_key(self) -> Tuple[int, int]:
        return self.level, self.mask

    def parents(self) -> Tuple["FactorSet", ...]:
        """The one-smaller subsets."""

        return tuple(
            FactorSet(self.mask ^ (1 << k))
            for k in range(self.mask.bit_length())
            if self.mask >> k & 1
        )

    def check(self, n_factors: int) -> "FactorSet":
        if self.mask >> n_factors:
            raise InputError(f"{self} uses a factor beyond K={n_factors}")
        return self

    def __lt__(self, other: "FactorSet") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return "{" + ",".join(str(k) for k in self.factors) + "}"


INTERCEPT = FactorSet(0)


@dataclass(frozen=True)
class TreatmentLevel:
    """One treatment combination z in {0, 1}^K."""

    z: int = 0

    def __post_init__(self):
        object.__setattr__(self, "z", int(self.z))
        if self.z < 0:
            raise InputError(f"Unexpected {self.z=}, masks are non-negative")

    @classmethod
    def from_string(cls, text: str) -> "TreatmentLevel":
        """Parse a K-character 0/1 string, ``z_1`` first (e.g. ``"101"``)."""

        if not text or set(text) - {"0", "1"}:
            raise InputError(f"Unexpected arm string {text!r}, expected 0/1 characters")
        return cls(sum(1 << k for k, char in enumerate(text) if char == "1"))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "TreatmentLevel":
        """Build from ``(z_1, ..., z_K)``."""

        if any(bit not in (0, 1) for bit in bits):
            raise InputError(f"Unexpected treatment {tuple(bits)}, expected 0/1 values")
        return cls(sum(1 << k for k, bit in enumerate(bits) if bit))

    @classmethod
    def from_row(cls, row: int, n_factors: int) -> "TreatmentLevel":
        """Inverse of :meth:`row`."""

        return cls(_reverse_bits(int(row), n_factors))

    def row(self, n_factors: int) -> int:
        """Lexicographic row index r(z), with ``z_1`` the most significant digit."""

        self.check(n_factors)
        return _reverse_bits(self.z, n_factors)

    def bit(self, factor: int) -> int:
        """``z_k`` for 1-based factor ``k``."""

        return self.z >> (factor - 1) & 1

    @property
    def n_active(self) -> int:
        return self.z.bit_count()

    def to_string(self, n_factors: int) -> str:
        self.check(n_factors)
        return "".join("1" if self.z >> k & 1 else "0" for k in range(n_factors))

    def check(self, n_factors: int) -> "TreatmentLevel":
        if self.z >> n_factors:
            raise InputError(
                f"Treatment mask {self.z:#b} uses a factor beyond K={n_factors}"
            )
        return self


def _reverse_bits(value: int, n_bits: int) -> int:
    out = 0
    for k in range(n_bits):
        out |= (value >> k & 1) << (n_bits - 1 - k)
    return out


@lru_cache(maxsize=None)
def _popcounts(n_factors: int) -> np.ndarray:
    values = np.arange(1 << n_factors, dtype=np.int64)
    counts = np.bitwise_count(values).astype(np.int64)
    counts.flags.writeable = False
    return counts


@lru_cache(maxsize=None)
def _bit_reversal(n_factors: int) -> np.ndarray:
    values = np.arange(1 << n_factors, dtype=np.int64)
    reversed_ = np.zeros_like(values)
    for k in range(n_factors):
        reversed_ |= ((values >> k) & 1) << (n_factors - 1 - k)
    reversed_.flags.writeable = False
    return reversed_


@lru_cache(maxsize=None)
def canonical_masks(n_factors: int) -> np.ndarray:
    """All 2^K subset masks in canonical effect order (level, then mask)."""

    check_factor_count(n_factors)
    masks = np.arange(1 << n_factors, dtype=np.int64)
    order = np.lexsort((masks, _popcounts(n_factors)))
    ordered = masks[order]
    ordered.flags.writeable = False
    return ordered


@lru_cache(maxsize=None)
def canonical_positions(n_factors: int) -> np.ndarray:
    """``positions[mask]`` is the index of ``mask`` in canonical effect order."""

    positions = np.empty(1 << n_factors, dtype=np.int64)
    positions[canonical_masks(n_factors)] = np.arange(1 << n_factors)
    positions.flags.writeable = False
    return positions


@lru_cache(maxsize=None)
def _row_signs(n_factors: int) -> np.ndarray:
    # (-1)^popcount is invariant under bit reversal
    signs = np.where(_popcounts(n_factors) % 2, -1.0, 1.0)
    signs.flags.writeable = False
    return signs


class WorkingModel(Sequence[FactorSet]):
    """An ordered collection of factorial effects defining a regression.

    Always contains the intercept, first; members are kept unique and sorted by
    (level, mask).
    """

    def __init__(self, sets: Iterable[FactorSet] = ()):
        unique = {INTERCEPT}
        for factor_set in sets:
            if not isinstance(factor_set, FactorSet):
                raise InputError(f"Unexpected {type(factor_set)=} in working model")
            unique.add(factor_set)
        self._sets: Tuple[FactorSet, ...] = tuple(sorted(unique))
        self._members = frozenset(self._sets)

    @classmethod
    def full(cls, n_factors: int) -> "WorkingModel":
        """The saturated model holding all 2^K effects."""

        return cls(FactorSet(int(mask)) for mask in canonical_masks(n_factors))

    @classmethod
    def from_list(cls, factor_lists: Iterable[Iterable[int]]) -> "WorkingModel":
        """Parse the serialized form ``[[], [1], [1, 2]]``."""

        return cls(FactorSet.from_factors(factors) for factors in factor_lists)

    def to_list(self) -> List[List[int]]:
        return [list(factor_set.factors) for factor_set in self._sets]

    @overload
    def __getitem__(self, index: int) -> FactorSet:
        ...

    @overload
    def __getitem__(self, index: slice) -> Sequence[FactorSet]:
        ...

    def __getitem__(self, index: Union[int, slice]):
        return self._sets[index]

    def __len__(self) -> int:
        return len(self._sets)

    def __iter__(self) -> Iterator[FactorSet]:
        return iter(self._sets)

    def __contains__(self, item: object) -> bool:
        return item in self._members

    def __eq__(self, other: object) -> bool:
        if isinstance(other, WorkingModel):
            return self._sets == other._sets
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._sets)

    def __repr__(self) -> str:
        return f"WorkingModel({self.to_list()})"

    @property
    def masks(self) -> np.ndarray:
        masks = (factor_set.mask for factor_set in self._sets)
        return np.fromiter(masks, dtype=np.int64, count=len(self))

    @property
    def max_level(self) -> int:
        return self._sets[-1].level

    def level_slice(self, level: int) -> List[FactorSet]:
        """Members with exactly ``level`` factors."""

        return [factor_set for factor_set in self._sets if factor_set.level == level]

    def union(self, sets: Iterable[FactorSet]) -> "WorkingModel":
        return WorkingModel(itertools.chain(self._sets, sets))

    def positions(self, n_factors: int) -> np.ndarray:
        """Indices of the members in the canonical order of all 2^K effects."""

        self.check(n_factors)
        return canonical_positions(n_factors)[self.masks]

    def check(self, n_factors: int) -> "WorkingModel":
        for factor_set in self._sets:
            factor_set.check(n_factors)
        return self


def contrast_value(factor_set: FactorSet, treatment: TreatmentLevel) -> int:
    """Entry g_K(z) = prod_{k in K} (2 z_k - 1) of the contrast matrix.

    Evaluated as ``(-1)^(|K| + |K & z|)``.

    Example:

    .. code-block:: python

        contrast_value(FactorSet.from_factors([1]), TreatmentLevel.from_string("101"))
        # 1

    Args:
        factor_set (FactorSet): effect index K
        treatment (TreatmentLevel): treatment combination z

    Returns:
        int: +1 or -1
    """

    parity = factor_set.mask.bit_count() + (factor_set.mask & treatment.z).bit_count()
    return -1 if parity & 1 else 1


def _contrast_block(row_masks: np.ndarray, set_masks: np.ndarray) -> np.ndarray:
    parity = np.bitwise_count(set_masks)[None, :] + np.bitwise_count(
        row_masks[:, None] & set_masks[None, :]
    )
    return np.where(parity & 1, -1, 1).astype(np.int8)


@dataclass(frozen=True)
class ContrastMatrix:
    """Dense contrast matrix G.

    Rows are indexed by r(z), columns follow the canonical effect order.
    """

    n_factors: int
    entries: np.ndarray

    @property
    def n_arms(self) -> int:
        return 1 << self.n_factors

    def column(self, factor_set: FactorSet) -> np.ndarray:
        factor_set.check(self.n_factors)
        return self.entries[:, canonical_positions(self.n_factors)[factor_set.mask]]

    def row(self, treatment: TreatmentLevel) -> np.ndarray:
        return self.entries[treatment.row(self.n_factors)]

    def columns(self, model: WorkingModel) -> np.ndarray:
        return self.entries[:, model.positions(self.n_factors)]

    def gram(self) -> np.ndarray:
        """G^T G, which equals Q * I."""

        entries = self.entries.astype(np.int64)
        return entries.T @ entries


def contrast_matrix(n_factors: int) -> ContrastMatrix:
    """Stack the contrast vectors of all 2^K effects into G.

    Args:
        n_factors (int): K, at most :data:`MAX_DENSE_FACTORS`

    Raises:
        InputError: K out of range.

    Returns:
        ContrastMatrix: Q x Q matrix of +-1
    """

    n_factors = check_factor_count(n_factors, MAX_DENSE_FACTORS)
    n_arms = 1 << n_factors
    row_masks = _bit_reversal(n_factors)
    set_masks = canonical_masks(n_factors)

    entries = np.empty((n_arms, n_arms), dtype=np.int8)
    # Chunked so that the int64 intermediates stay small for large K
    chunk = max(1, (1 << 22) // n_arms)
    for start in range(0, n_arms, chunk):
        stop = min(start + chunk, n_arms)
        entries[start:stop] = _contrast_block(row_masks[start:stop], set_masks)

    entries.flags.writeable = False
    return ContrastMatrix(n_factors, entries)


def contrast_columns(model: WorkingModel, n_factors: int) -> np.ndarray:
    """G(., M) as a float Q x |M| array, without building the full G."""

    n_factors = check_factor_count(n_factors)
    block = _contrast_block(_bit_reversal(n_factors), model.check(n_factors).masks)
    return block.astype(np.float64)


def contrast_vector(factor_set: FactorSet, n_factors: int) -> np.ndarray:
    """Column g_K of G as a float vector indexed by r(z)."""

    n_factors = check_factor_count(n_factors)
    masks = np.array([factor_set.check(n_factors).mask], dtype=np.int64)
    return _contrast_block(_bit_reversal(n_factors), masks)[:, 0].astype(np.float64)


def walsh_hadamard(values: npt.ArrayLike) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0 (natural order).

    ``out[c] = sum_r (-1)^popcount(r & c) * values[r]``, computed with
    log2(Q) vectorized butterfly passes. Trailing axes are transformed
    independently.
    """

    out = np.array(values, dtype=np.float64, copy=True)
    n_rows = out.shape[0]
    factor_count_of(n_rows)
    tail = out.shape[1:]

    half = 1
    while half < n_rows:
        out = out.reshape((n_rows // (2 * half), 2, half) + tail)
        upper = out[:, 0] + out[:, 1]
        lower = out[:, 0] - out[:, 1]
        out = np.stack((upper, lower), axis=1)
        half *= 2
    return out.reshape((n_rows,) + tail)


def _as_arm_vector(
    values: npt.ArrayLike, n_factors: Optional[int]
) -> Tuple[np.ndarray, int]:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 0:
        raise InputError("Expected a length-Q vector, got a scalar")
    detected = factor_count_of(array.shape[0])
    if n_factors is not None and detected != n_factors:
        raise InputError(
            f"Length mismatch: expected {1 << n_factors} entries for K={n_factors}, "
            f"got {array.shape[0]}"
        )
    return array, detected


def _broadcast(vector: np.ndarray, ndim: int) -> np.ndarray:
    return vector.reshape(vector.shape + (1,) * (ndim - 1))


def effect_transform(
    values: npt.ArrayLike,
    model: Optional[WorkingModel] = None,
    n_factors: Optional[int] = None,
) -> np.ndarray:
    """Compute Q^-1 G^T v with a fast Walsh-Hadamard transform.

    For arm means this yields the factorial effects. The result is in canonical
    effect order, or in the order of ``model`` when given. Extra trailing axes
    of ``values`` are carried along, so a Q x L array transforms L vectors at
    once.

    Args:
        values (npt.ArrayLike): length-Q vector indexed by r(z)
        model (Optional[WorkingModel], optional): restrict the output to these
            effects. Defaults to None (all effects).
        n_factors (Optional[int], optional): expected K. Defaults to None
            (inferred from the length).

    Raises:
        InputError: the length is not 2^K (or not 2^n_factors).

    Returns:
        np.ndarray: effects, in canonical or model order
    """

    array, n_factors = _as_arm_vector(values, n_factors)
    n_arms = 1 << n_factors

    transformed = walsh_hadamard(array)
    transformed *= _broadcast(_row_signs(n_factors) / n_arms, transformed.ndim)

    if model is None:
        masks = canonical_masks(n_factors)
    else:
        masks = model.check(n_factors).masks
    return transformed[_bit_reversal(n_factors)[masks]]


def effect_synthesis(
    coefficients: npt.ArrayLike,
    model: Optional[WorkingModel] = None,
    n_factors: Optional[int] = None,
) -> np.ndarray:
    """Compute G(., M) tau, the inverse direction of :func:`effect_transform`.

    Args:
        coefficients (npt.ArrayLike): effects, in canonical order (``model`` is
            None) or in the order of ``model``
        model (Optional[WorkingModel], optional): effects the coefficients belong
            to. Defaults to None (all effects, canonical order).
        n_factors (Optional[int], optional): K; required when ``model`` is given.

    Returns:
        np.ndarray: length-Q vector indexed by r(z)
    """

    coefficients = np.asarray(coefficients, dtype=np.float64)
    if model is None:
        _, n_factors = _as_arm_vector(coefficients, n_factors)
        masks = canonical_masks(n_factors)
    else:
        if n_factors is None:
            raise InputError("n_factors is required when synthesizing from a model")
        n_factors = check_factor_count(n_factors)
        masks = model.check(n_factors).masks
        if coefficients.shape[0] != len(model):
            raise InputError(
                f"Length mismatch: {len(model)} effects in model, "
                f"got {coefficients.shape[0]} coefficients"
            )

    rows = _bit_reversal(n_factors)[masks]
    scattered = np.zeros((1 << n_factors,) + coefficients.shape[1:])
    signs = _broadcast(_row_signs(n_factors)[rows], coefficients.ndim)
    scattered[rows] = coefficients * signs
    return walsh_hadamard(scattered)


class Heredity(str, Enum):
    """Heredity principle used to prune interaction candidates."""

    WEAK = "weak"
    STRONG = "strong"


def heredity_expand(
    previous: Iterable[FactorSet],
    level: int,
    mode: Union[Heredity, str],
    n_factors: int,
) -> List[FactorSet]:
    """H-step: level-``level`` effects allowed by the previous level's selection.

    Under weak heredity a candidate needs at least one selected parent, under
    strong heredity all of its parents. Level 1 always yields every main effect
    since the intercept is their only parent.

    Example, strong heredity with K = 3:

    .. code-block:: python

        heredity_expand([FactorSet.from_factors([1]), FactorSet.from_factors([2])],
                        2, "strong", 3)
        # [FactorSet({1,2})]

    Args:
        previous (Iterable[FactorSet]): selected effects of level ``level - 1``
        level (int): level d of the candidates
        mode (Union[Heredity, str]): weak or strong
        n_factors (int): K

    Raises:
        InputError: ``previous`` holds an effect of another level.

    Returns:
        List[FactorSet]: candidates, in canonical order
    """

    mode = Heredity(mode)
    n_factors = check_factor_count(n_factors)
    if level < 1:
        raise InputError(f"Unexpected {level=}, levels start at 1")
    if level > n_factors:
        return []
    if level == 1:
        return [FactorSet(1 << k) for k in range(n_factors)]

    selected = set()
    for factor_set in previous:
        if factor_set.level != level - 1:
            raise InputError(f"{factor_set} is not a level-{level - 1} effect")
        selected.add(factor_set.check(n_factors).mask)
    if not selected:
        return []

    rule = any if mode is Heredity.WEAK else all
    candidates = []
    for combination in itertools.combinations(range(n_factors), level):
        mask = sum(1 << k for k in combination)
        if rule((mask ^ (1 << k)) in selected for k in combination):
            candidates.append(FactorSet(mask))
    return sorted(candidates)


def heredity_closure(
    base: Iterable[FactorSet],
    depth: int,
    mode: Union[Heredity, str],
    n_factors: int,
) -> List[List[FactorSet]]:
    """Apply :func:`heredity_expand` ``depth`` times starting from ``base``.

    Args:
        base (Iterable[FactorSet]): selected effects, all of one level d*
        depth (int): number of extra levels t
        mode (Union[Heredity, str]): weak or strong
        n_factors (int): K

    Returns:
        List[List[FactorSet]]: the slices for levels d*+1 .. d*+t
    """

    if depth < 0:
        raise InputError(f"Unexpected {depth=}, expected >= 0")

    current = list(base)
    levels = {factor_set.level for factor_set in current}
    if len(levels) > 1:
        raise InputError(f"Closure base mixes levels {sorted(levels)}")
    level = levels.pop() if levels else 0

    slices = []
    for _ in range(depth):
        level += 1
        current = heredity_expand(current, level, mode, n_factors) if current else []
        slices.append(current)
    return slices


def obeys_heredity(model: WorkingModel, mode: Union[Heredity, str]) -> bool:
    """Whether every interaction in ``model`` has the parents ``mode`` requires."""

    rule = any if Heredity(mode) is Heredity.WEAK else all
    return all(
        rule(parent in model for parent in factor_set.parents())
        for factor_set in model
        if factor_set.level >= 2
    )
