import datetime
import json
import logging
import os
import signal
import uuid
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import pytz

from facetrans_lib.status import Status

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

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
MANIFEST_FORMAT = "facetrans-manifest"
MANIFEST_VERSION = 1


def code_version() -> str:
    try:
        return version("facetrans-lib")
    except PackageNotFoundError:
        return "unknown"


def __timestamp__() -> str:
    return datetime.datetime.now(pytz.utc).isoformat()


def write_json_atomically(path: str | Path, payload: dict[str, Any]) -> Path:
    """
    Writes a JSON document through a temporary sibling file and `os.replace`, so readers never see a partial file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temporary = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(temporary, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    os.replace(temporary, path)
    return path


class ManifestReporter:
    """
    Records the lifecycle of one command run as `manifest.json` in its output directory

    The manifest is written when the run registers and again whenever its status changes, so a directory always holds
    exactly one manifest describing the latest known state of the run that produced it.
    """

    def __init__(self, command: str, out_dir: str | Path, config: dict[str, Any] | None = None,
                 inputs: dict[str, Any] | None = None, outputs: dict[str, Any] | None = None,
                 seed: int | None = None, run_id: str | None = None, handle_signals: bool = False):
        """
        :param command: Subcommand name, e.g. `train`
        :param out_dir: Directory the manifest is written to
        :param config: The fully resolved configuration of the run
        :param inputs: Named input paths
        :param outputs: Named output paths, may be extended with `add_output()` as the run progresses
        :param seed: The run's seed
        :param run_id: Identifier of the run, generated if not supplied
        :param handle_signals: Whether SIGTERM/SIGINT mark the manifest as terminated before exiting
        """
        if not command:
            raise ValueError("A command name is required")
        self.command = command
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / MANIFEST_FILE
        self.config = dict(config or {})
        self.inputs = {k: str(v) for k, v in (inputs or {}).items()}
        self.outputs = {k: str(v) for k, v in (outputs or {}).items()}
        self.seed = seed
        self.run_id = run_id or str(uuid.uuid4())
        self.status: Status | None = None
        self.error: dict[str, str] | None = None
        self.started_at: str | None = None
        self.ended_at: str | None = None
        self.__previous_handlers: dict[int, Any] = {}
        if handle_signals:
            for signum in (signal.SIGTERM, signal.SIGINT):
                self.__previous_handlers[signum] = signal.signal(signum, self.__terminate__)

    def __terminate__(self, signum, frame):
        logger.warning(f"Received signal {signum}, marking run {self.run_id} as terminated")
        self.finish(Status.TERMINATED)
        raise SystemExit(128 + signum)

    def restore_signals(self) -> None:
        """
        Reinstates the signal handlers that were active before this reporter was created
        """
        for signum, handler in self.__previous_handlers.items():
            signal.signal(signum, handler)
        self.__previous_handlers = {}

    def get_details(self) -> dict[str, Any]:
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "run_id": self.run_id,
            "command": self.command,
            "code_version": code_version(),
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started": self.started_at,
            "ended": self.ended_at,
            "status": self.status.value if self.status is not None else None,
            "error": self.error,
        }

    def register(self) -> Path:
        """
        Marks the run as started and writes the initial manifest
        """
        self.started_at = __timestamp__()
        self.status = Status.STARTED
        logger.debug(f"Registering run {self.run_id} of {self.command} in {self.path}")
        return self.__write__()

    def add_output(self, name: str, path: str | Path) -> None:
        self.outputs[name] = str(path)

    def set_status(self, status: Status) -> Path:
        if self.status is not None and self.status.is_final:
            raise ValueError(f"Run {self.run_id} already finished with status {self.status.value}")
        self.status = status
        return self.__write__()

    def finish(self, status: Status = Status.COMPLETED, error: BaseException | None = None) -> Path:
        """
        Writes the final manifest

        :param status: Final status
        :param error: The exception that ended the run, if any
        """
        if not status.is_final:
            raise ValueError(f"{status.value} is not a final status")
        if self.started_at is None:
            self.started_at = __timestamp__()
        self.ended_at = __timestamp__()
        if error is not None:
            self.error = {"type": error.__class__.__name__, "message": str(error)}
            checkpoint = getattr(error, "checkpoint_path", None)
            if checkpoint is not None:
                self.error["checkpoint_path"] = str(checkpoint)
        self.status = status
        return self.__write__()

    def __write__(self) -> Path:
        return write_json_atomically(self.path, self.get_details())


def read_manifest(path: str | Path) -> dict[str, Any]:
    """
    Reads a manifest, given either its file or the directory holding it
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    with open(path, encoding="utf-8") as f:
        return json.load(f)
