import datetime
import importlib
import json
import sys
import traceback
from enum import Enum
from pathlib import Path

import pytz

from facetrans_lib.config import Configurator, OnError
from facetrans_lib.exceptions import InvalidArgumentError, NumericalInstabilityError

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

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2
EXIT_NUMERICAL_INSTABILITY = 3


class ErrorLevel(Enum):
    INFO = 0
    WARNING = 1
    ERROR = 2


def exit_code_for(exception: BaseException) -> int:
    """
    Maps an exception onto the command line exit-code contract

    :param exception: Exception that aborted a command
    :return: 3 for numerical instability, 2 for invalid arguments, 1 for anything else
    """
    if isinstance(exception, NumericalInstabilityError):
        return EXIT_NUMERICAL_INSTABILITY
    if isinstance(exception, InvalidArgumentError):
        return EXIT_USAGE_ERROR
    return EXIT_RUNTIME_ERROR


def auto_discover_error_handler():
    config = Configurator()
    error_handler = config.get("ERROR_HANDLER_CLASS", "facetrans_lib.errors.FileBasedErrorHandler",
                               on_error=OnError.RAISE_EXCEPTION)
    my_module, my_class = error_handler.rsplit('.', 1)
    module = importlib.import_module(my_module)
    return getattr(module, my_class)


class ErrorHandler:

    def __init__(self, component_id: str):
        super().__init__()
        self.component_id = component_id
        self.headers: dict = {}

    def set_headers(self, headers: dict, merge: bool = True):
        if merge:
            self.headers.update(headers)
        else:
            self.headers = headers

    def __send_record__(self, record: dict):
        raise NotImplementedError()

    def close(self):
        raise NotImplementedError()

    def send_exception(self, exception: BaseException, level: ErrorLevel = ErrorLevel.ERROR, counter: int = 0):
        stack_trace = "".join(traceback.format_exception(type(exception), exception, exception.__traceback__))
        self.__send_record__(self.__prepare_record__(
            str(exception), stack_trace.rstrip("\n"), exception.__class__.__name__, level, counter
        ))

    def send_error(self, error: str, error_type: str = '', level=ErrorLevel.ERROR, counter=0):
        self.__send_record__(self.__prepare_record__(
            str(error), '', error_type, level, counter
        ))

    def __prepare_record__(self, error_message, stack_trace, error_type, level, counter) -> dict:
        return {
            'headers': dict(self.headers),
            'id': self.component_id,
            'error_message': error_message,
            'stack_trace': stack_trace,
            'error_type': error_type,
            'timestamp': datetime.datetime.now(pytz.utc).isoformat(),
            'level': level.name,
            'counter': counter
        }


class FileBasedErrorHandler(ErrorHandler):
    """
    Appends one JSON error record per line to a file, by default `errors.jsonl` in the run directory
    """

    def __init__(self, component_id, file_path=None):
        super().__init__(component_id)
        if file_path is None:
            config = Configurator()
            file_path = config.get("ERROR_HANDLER_FILE_PATH", 'errors.jsonl', on_error=OnError.RAISE_EXCEPTION)
        self.file_path = Path(file_path)
        self.f = None

    def __send_record__(self, record: dict):
        # Opened lazily so that successful runs leave no empty error file behind
        if self.f is None:
            self.file_path.parent.mkdir(parents=True, exist_ok=True)
            self.f = open(self.file_path, "a", encoding="utf-8")
        self.f.write(json.dumps(record, sort_keys=True) + "\n")
        self.f.flush()

    def close(self):
        if self.f is not None:
            self.f.close()
            self.f = None


class PrintErrorHandler(ErrorHandler):

    def __send_record__(self, record: dict):
        print(record['error_message'], file=sys.stderr)

    def close(self):
        pass


class ListErrorHandler(ErrorHandler):
    """
    Keeps error records in memory, intended for tests
    """

    def __init__(self, component_id: str = 'test'):
        super().__init__(component_id)
        self.errors: list[dict] = []
        self.closed = False

    def __send_record__(self, record: dict):
        self.errors.append(record)

    def close(self):
        self.closed = True
