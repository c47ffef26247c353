"""
Checkpoint archives

A checkpoint is an uncompressed NumPy `.npz` archive, readable without pickling:

- `<network>/<parameter>`: one array per parameter block, e.g. `g_xy/encoder.0.weight`
- `adam/<group>/m/<network>/<parameter>` and `adam/<group>/v/...`: Adam moment accumulators
- `__metadata__`: a JSON string with `format`, `version`, `kind`, `arch`, `expressions`, `K`, `seed`, `iteration`,
  `adam_steps`, `rng_state` and `created`
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import pytz
import torch
from torch import nn

from facetrans_lib.exceptions import CheckpointError
from facetrans_lib.optim import AdamMoments, ModuleAdam

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

CHECKPOINT_FORMAT = "facetrans-checkpoint"
CHECKPOINT_VERSION = 1
METADATA_KEY = "__metadata__"
ADAM_PREFIX = "adam"


@dataclass
class Checkpoint:
    path: Path
    metadata: dict[str, Any]
    networks: dict[str, dict[str, np.ndarray]]
    moments: dict[str, AdamMoments] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.metadata.get("kind", "")

    @property
    def iteration(self) -> int:
        return int(self.metadata.get("iteration", 0))

    def restore(self, name: str, module: nn.Module) -> nn.Module:
        """
        Copies the named network's parameter blocks into `module`

        :raises CheckpointError: The network is missing or its blocks do not match the module
        """
        if name not in self.networks:
            raise CheckpointError(self.path, f"Checkpoint holds no network {name}, only {sorted(self.networks)}")
        state = {k: torch.from_numpy(np.array(v)) for k, v in self.networks[name].items()}
        try:
            module.load_state_dict(state, strict=True)
        except RuntimeError as e:
            raise CheckpointError(self.path, f"Network {name} does not match the architecture ({e})") from e
        return module


def __moment_key__(group: str, which: str, parameter: str) -> str:
    network, _, rest = parameter.partition(".")
    return f"{ADAM_PREFIX}/{group}/{which}/{network}/{rest}" if rest else f"{ADAM_PREFIX}/{group}/{which}/{network}"


def utc_now() -> str:
    return datetime.now(pytz.utc).isoformat()


def save_checkpoint(path: str | Path, networks: dict[str, nn.Module], metadata: dict[str, Any],
                    optimizers: dict[str, ModuleAdam] | None = None) -> Path:
    """
    Writes a checkpoint atomically

    :param path: Target `.npz` path
    :param networks: Networks by name, e.g. `{"g_xy": ..., "d_x": ...}`
    :param metadata: Metadata merged over the format header
    :param optimizers:
        Optimizers by group name.  Parameters of a grouped optimizer are named `<network>.<parameter>`, which is
        stored as `adam/<group>/m/<network>/<parameter>`.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    for name, module in networks.items():
        for parameter, value in module.state_dict().items():
            arrays[f"{name}/{parameter}"] = value.detach().cpu().numpy()
    adam_steps = {}
    for group, optimizer in (optimizers or {}).items():
        adam_steps[group] = optimizer.moments.step
        for parameter, value in optimizer.moments.first.items():
            arrays[__moment_key__(group, "m", parameter)] = value.detach().cpu().numpy()
        for parameter, value in optimizer.moments.second.items():
            arrays[__moment_key__(group, "v", parameter)] = value.detach().cpu().numpy()

    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "created": utc_now(),
              "adam_steps": adam_steps, **metadata}
    arrays[METADATA_KEY] = np.array(json.dumps(header, sort_keys=True, default=str))

    temporary = path.with_name(path.name + ".tmp")
    with open(temporary, "wb") as handle:
        np.savez(handle, **arrays)
    os.replace(temporary, path)
    logger.debug(f"Wrote checkpoint {path}")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Reads a checkpoint written by `save_checkpoint()`

    :raises CheckpointError: Missing file, not an archive, or not a facetrans checkpoint
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(path, "Checkpoint does not exist")
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(path, f"Not a readable checkpoint archive ({e})") from e
    if METADATA_KEY not in arrays:
        raise CheckpointError(path, "Archive has no checkpoint metadata")
    try:
        metadata = json.loads(str(arrays.pop(METADATA_KEY)))
    except json.JSONDecodeError as e:
        raise CheckpointError(path, f"Checkpoint metadata is not valid JSON ({e.msg})") from e
    if metadata.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(path, f"Unknown checkpoint format {metadata.get('format')}")
    if int(metadata.get("version", 0)) > CHECKPOINT_VERSION:
        raise CheckpointError(path, f"Checkpoint version {metadata.get('version')} is newer than supported")

    networks: dict[str, dict[str, np.ndarray]] = {}
    first: dict[str, dict[str, torch.Tensor]] = {}
    second: dict[str, dict[str, torch.Tensor]] = {}
    for key, value in arrays.items():
        if key.startswith(ADAM_PREFIX + "/"):
            _, group, which, network, parameter = (key.split("/", 4) + [""])[:5]
            name = f"{network}.{parameter}" if parameter else network
            target = first if which == "m" else second
            target.setdefault(group, {})[name] = torch.from_numpy(np.array(value))
        else:
            network, _, parameter = key.partition("/")
            networks.setdefault(network, {})[parameter] = value

    steps = metadata.get("adam_steps", {})
    moments = {group: AdamMoments(int(steps.get(group, 0)), first.get(group, {}), second.get(group, {}))
               for group in set(first) | set(second)}
    return Checkpoint(path=path, metadata=metadata, networks=networks, moments=moments)
