from pathlib import Path
from typing import Any, Mapping

from facetrans_lib.sinks.dataSink import DataSink
from facetrans_lib.sinks.serializers import SerializerFunction, Serializers

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


class JsonLinesSink(DataSink):
    """
    A Data Sink that appends one JSON object per line to a file, flushing after every record so that a crashed run
    still leaves a complete log of the records sent before the crash
    """

    def __init__(self, path: str | Path, serializer: SerializerFunction = Serializers.to_json_line,
                 overwrite: bool = True):
        self.path = Path(path)
        super().__init__(str(self.path))
        self.serializer = serializer
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.f = open(self.path, "w" if overwrite else "a", encoding="utf-8")
        self.count = 0

    def send(self, record: Mapping[str, Any]) -> None:
        if record is None:
            return
        if self.f is None:
            raise ValueError(f"Sink {self.path} is closed")
        self.f.write(self.serializer(record) + "\n")
        self.f.flush()
        self.count += 1

    def close(self):
        if self.f is not None:
            self.f.close()
            self.f = None
