import json
from typing import Any, Protocol, runtime_checkable

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
class DeserializerFunction(Protocol):
    """
    A protocol for deserializer functions that decode one line of stored text back into a record
    """

    def __call__(self, data: str) -> Any:
        """
        Decodes a line of text into a Python object

        :param data: Line of text, without the trailing newline
        :return: Python object
        """
        raise NotImplementedError


class Deserializers:
    """
    Provides some built-in deserializer functions
    """

    @staticmethod
    def from_json_line(data: str) -> Any:
        """
        A deserializer which decodes a line of JSON text

        :param data: The line to decode
        :return: Python object resulting from deserializing the JSON
        """
        return json.loads(data)
