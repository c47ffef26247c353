import json
from pathlib import Path
from typing import Any, Iterator

from facetrans_lib.exceptions import DatasetFormatError
from facetrans_lib.sources.dataSource import DataSource
from facetrans_lib.sources.deserializers import DeserializerFunction, Deserializers

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


class JsonLinesSource(DataSource):
    """
    A Data Source reading one JSON object per line from a file, e.g. a training metric log
    """

    def __init__(self, path: str | Path, deserializer: DeserializerFunction = Deserializers.from_json_line):
        self.path = Path(path)
        super().__init__(str(self.path))
        if not self.path.is_file():
            raise DatasetFormatError(self.path, "Log file does not exist")
        self.deserializer = deserializer

    def data(self) -> Iterator[dict[str, Any]]:
        with open(self.path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = self.deserializer(line)
                except json.JSONDecodeError as e:
                    raise DatasetFormatError(self.path, f"Line {line_no} is not valid JSON ({e.msg})") from e
                if not isinstance(record, dict):
                    raise DatasetFormatError(self.path, f"Line {line_no} is not a JSON object")
                yield record

    def __iter__(self):
        return self.data()

    def close(self) -> None:
        pass
