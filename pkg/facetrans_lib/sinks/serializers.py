import json
from typing import Any, Protocol, runtime_checkable

import numpy as np

__license__ = """
Copyright (c) The facetrans-lib Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""


@runtime_checkable
class SerializerFunction(Protocol):
    """
    A protocol for serializer functions that encode a record into a single line of text
    """

    def __call__(self, data: Any) -> str:
        """
        Encodes a record into one line of text
        :param data: Record
        :return: Line of text, without the trailing newline
        """
        pass


def __to_builtin__(value: Any) -> Any:
    """
    json.dumps() hook for the numeric types produced by numpy and torch
    """
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'tolist'):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class Serializers:
    """
    Provides some built-in serializer functions
    """

    @staticmethod
    def to_json_line(data: Any) -> str:
        """
        Serializes a record as compact JSON with sorted keys

        Floats are written with full round-trip precision.  NaN and infinities are rejected, a metric log never holds
        a non-finite value.

        :param data: Record
        :raises ValueError: Record holds a non-finite float
        :return: JSON text
        """
        return json.dumps(data, sort_keys=True, separators=(',', ':'), allow_nan=False, default=__to_builtin__)

    @staticmethod
    def to_pretty_json(data: Any) -> str:
        """
        Serializes a record as indented JSON with sorted keys, used for manifests and reports
        """
        return json.dumps(data, sort_keys=True, indent=2, allow_nan=False, default=__to_builtin__)
