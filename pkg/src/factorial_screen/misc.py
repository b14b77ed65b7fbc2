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
from typing import Any, Tuple

import numpy as np
from scipy import special

from .errors import InputError


def normal_quantile(p: float) -> float:
    """Standard normal quantile function.

    Uses Cephes' ``ndtri`` (rational approximations on three ranges of ``p``),
    which is accurate to double precision.

    Args:
        p (float): probability, strictly between 0 and 1

    Raises:
        InputError: ``p`` outside (0, 1).

    Returns:
        float: x such that Phi(x) = p
    """

    if not 0.0 < p < 1.0 or math.isnan(p):
        raise InputError(f"Probability must lie in (0, 1), got {p=}")
    return float(special.ndtri(p))


def normal_cdf(x: float) -> float:
    """Standard normal cumulative distribution function."""

    return float(special.ndtr(x))


def critical_value(alpha: float) -> float:
    """Two-sided normal critical value z_{1 - alpha/2}."""

    return normal_quantile(1.0 - alpha / 2.0)


def wald_interval(estimate: float, se: float, alpha: float) -> Tuple[float, float]:
    """Wald-type level-(1 - alpha) confidence interval ``estimate +- z * se``."""

    half_width = critical_value(alpha) * se
    return estimate - half_width, estimate + half_width


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples into JSON types.

    Non-finite floats become ``None`` so the output stays strict JSON.
    """

    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value
