import json
import os
from pathlib import Path
from typing import Any

from facetrans_lib.exceptions import DatasetFormatError

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

ENVIRONMENT_PREFIX = "FACETRANS_"


def __normalise_key__(config_key: str) -> str:
    return config_key.replace('-', '_').lower()


class ConfigSource:
    """
    Represents a Configuration Source that provides access to raw configuration values

    Intended for use in conjunction with a `Configurator` which provides mechanisms for converting the raw values into
    typed values, supplying default values etc.  Keys are matched case-insensitively with dashes and underscores
    treated alike, so `--batch-size`, `batch_size` and `FACETRANS_BATCH_SIZE` all name the same key.
    """

    def get(self, config_key: str) -> Any:
        """
        Gets the raw value of the given configuration key

        :param config_key: Configuration Key
        :return: Raw value, or None if this source has no value for the key
        """
        raise NotImplementedError


class EnvironmentSource(ConfigSource):
    """
    A Configuration Source backed by the OS Environment i.e. `os.getenv()`, with variables prefixed `FACETRANS_`
    """

    def __init__(self, prefix: str = ENVIRONMENT_PREFIX):
        self.prefix = prefix

    def get(self, config_key: str):
        return os.getenv(self.prefix + __normalise_key__(config_key).upper())

    def __str__(self):
        return "OS Environment"


class DictionarySource(ConfigSource):
    """
    A Configuration Source backed by a dictionary, used for parsed command line flags
    """

    def __init__(self, dictionary: dict[str, Any], name: str = "Dictionary"):
        self.configuration = {__normalise_key__(k): v for k, v in dictionary.items() if v is not None}
        self.name = name

    def get(self, config_key: str):
        return self.configuration.get(__normalise_key__(config_key))

    def __str__(self):
        return f"{self.name} with {len(self.configuration)} items"


class JsonFileSource(DictionarySource):
    """
    A Configuration Source backed by a JSON object file, the `--config` file of the command line
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            with open(self.path, encoding="utf-8") as f:
                payload = json.load(f)
        except FileNotFoundError as e:
            raise DatasetFormatError(self.path, "Configuration file does not exist") from e
        except json.JSONDecodeError as e:
            raise DatasetFormatError(self.path, f"Configuration file is not valid JSON ({e.msg})") from e
        if not isinstance(payload, dict):
            raise DatasetFormatError(self.path, "Configuration file must hold a JSON object")
        super().__init__(payload, name=f"Config file {self.path}")


class LayeredSource(ConfigSource):
    """
    A Configuration Source that consults several sources in order, the first non-None value wins
    """

    def __init__(self, *sources: ConfigSource):
        self.sources = [s for s in sources if s is not None]

    def get(self, config_key: str):
        for source in self.sources:
            value = source.get(config_key)
            if value is not None:
                return value
        return None

    def __str__(self):
        return " > ".join(str(s) for s in self.sources)
