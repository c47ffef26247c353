from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Any, MutableMapping

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


class RunLogFormats:
    BASIC = ['name', 'levelname', 'msg', 'created']
    RUN = ['name', 'run_id', 'log_type', 'levelname', 'msg', 'created']


MERGE = 0
REPLACE = 1


class RunLoggerAdapter(logging.LoggerAdapter):
    """
    A logger adapter that stamps every record with the run id, a log type and a dictionary of headers
    """

    def __init__(self, logger: logging.Logger, headers: dict = None, run_id: str = None,
                 log_type: str = None, extra: dict = None, header_method: int = MERGE):
        if extra is None:
            extra = {}
        super().__init__(logger, extra)
        if headers is None:
            headers = {}
        self.headers = headers
        self.run_id = run_id
        self.log_type = log_type
        self.header_method = header_method

    def process(self, msg: str, kwargs: MutableMapping[str, Any]) -> tuple[Any, MutableMapping[str, Any]]:
        extra = kwargs.get('extra', {})

        if 'header_method' in kwargs:
            header_method = kwargs.pop('header_method')
        else:
            header_method = self.header_method

        if 'headers' in kwargs:
            if header_method == MERGE:
                extra['headers'] = self.headers.copy()
                extra['headers'].update(kwargs.pop('headers'))
            else:
                extra['headers'] = kwargs.pop('headers')
        else:
            extra['headers'] = self.headers

        extra['log_type'] = kwargs.pop('log_type', self.log_type)
        extra['run_id'] = self.run_id

        kwargs['extra'] = extra
        return msg, kwargs


class JSONFormatter(logging.Formatter):

    def __init__(self, fmt: list = None, datefmt: str = None, style='%', validate=True, *, defaults=None):
        del style, validate, defaults  # Unused
        super().__init__(datefmt=datefmt)
        if fmt is None:
            self.fmt = RunLogFormats.BASIC
        else:
            self.fmt = fmt

    def format(self, record: logging.LogRecord) -> str:
        log_dict = {}
        for fmt_kwarg in self.fmt:
            if fmt_kwarg == 'created':
                log_dict[fmt_kwarg] = self.formatTime(record)
            elif fmt_kwarg == 'msg':
                log_dict[fmt_kwarg] = record.getMessage()
            else:
                log_dict[fmt_kwarg] = record.__dict__.get(fmt_kwarg)
        headers = record.__dict__.get('headers')
        if headers:
            log_dict['headers'] = headers
        return json.dumps(log_dict, default=str)


class RunLoggerFactory:

    @staticmethod
    def get_logger(
            name: str, log_path: str | Path | None = None, level: int = logging.INFO, fmt: list | None = None,
            headers: dict | None = None, run_id: str | None = None, log_type: str | None = None,
            header_method: int = MERGE, stream: bool = True
    ) -> RunLoggerAdapter:
        """
        Gets a logger whose records are written as JSON lines to `log_path` (if given) and to stderr

        :param name: Logger name, normally the `facetrans_lib` root so every module's records are captured
        :param log_path: JSON lines file, typically `<out_dir>/run.log`
        :param level: Logging level
        :param fmt: Record fields to include, defaults to `RunLogFormats.RUN`
        :param headers: Headers attached to every record
        :param run_id: Run identifier attached to every record
        :param log_type: Default log type attached to every record
        :param header_method: `MERGE` or `REPLACE` for per-call headers
        :param stream: Whether to also log to stderr
        """
        logger = logging.getLogger(name)
        logger.setLevel(level)
        if fmt is None:
            fmt = RunLogFormats.RUN

        handlers: list[logging.Handler] = []
        if log_path is not None:
            Path(log_path).parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
        if stream:
            handlers.append(logging.StreamHandler(sys.stderr))

        for handler in handlers:
            handler.setLevel(level)
            handler.setFormatter(JSONFormatter(fmt))
            logger.addHandler(handler)

        return RunLoggerAdapter(logger, headers=headers, run_id=run_id, log_type=log_type,
                                header_method=header_method)

    @staticmethod
    def release(adapter: RunLoggerAdapter) -> None:
        """
        Closes and detaches the handlers of a logger obtained from `get_logger()`
        """
        logger = adapter.logger
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)
