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

from typing import Iterable, Tuple


class FactorialError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 4


class InputError(FactorialError, ValueError):
    """Malformed data, configuration or arguments."""

    exit_code = 2


class EnumerationTooLargeError(InputError):
    """The exact assignment enumeration would visit too many assignments."""


class ReplicationError(FactorialError):
    """Some treatment arms do not have enough units for the requested quantity.

    Args:
        message (str): what could not be computed
        arms (Iterable[str]): offending arms as K-character 0/1 strings
    """

    exit_code = 3

    def __init__(self, message: str, arms: Iterable[str] = ()):
        self.arms: Tuple[str, ...] = tuple(arms)
        self.message = message
        super().__init__(self._render())

    def _render(self) -> str:
        if not self.arms:
            return self.message

        shown = ", ".join(self.arms[:8])
        if len(self.arms) > 8:
            shown += f", ... ({len(self.arms)} arms)"
        return f"{self.message}: {shown}"

    def with_context(self, context: str) -> "ReplicationError":
        """Same error, message prefixed by ``context``."""

        return ReplicationError(f"{context}: {self.message}", self.arms)
