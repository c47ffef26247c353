"""
Conversions between the two image representations used throughout the library

NumPy images are channels-last `H×W×C` float32 arrays in [-1, 1], the storage and dataset representation.  Torch images
are channels-first `N×C×H×W` tensors, the network representation.  8-bit values map onto [-1, 1] by `v / 127.5 - 1`,
so a rendered image and the same image loaded back from PNG are bit-identical.
"""
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

from facetrans_lib.exceptions import DatasetFormatError, InvalidArgumentError

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


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / np.float32(127.5) - np.float32(1.0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    clipped = np.clip(np.asarray(image, dtype=np.float64), -1.0, 1.0)
    return np.rint((clipped + 1.0) * 127.5).astype(np.uint8)


def to_tensor(images: np.ndarray | list[np.ndarray], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """
    Converts one `H×W×C` image or a list of them into an `N×C×H×W` tensor
    """
    if isinstance(images, list):
        if not images:
            raise InvalidArgumentError("Cannot build a batch from an empty list of images")
        array = np.stack(images)
    else:
        array = np.asarray(images)
        if array.ndim == 3:
            array = array[None]
    if array.ndim != 4:
        raise InvalidArgumentError(f"Expected H×W×C images, got array of shape {array.shape}")
    return torch.from_numpy(np.ascontiguousarray(array.transpose(0, 3, 1, 2))).to(dtype)


def to_numpy(batch: torch.Tensor) -> np.ndarray:
    """
    Converts an `N×C×H×W` (or `C×H×W`) tensor back into `N×H×W×C` (or `H×W×C`) float32 arrays
    """
    array = batch.detach().cpu().to(torch.float32).numpy()
    if array.ndim == 3:
        return array.transpose(1, 2, 0)
    return array.transpose(0, 2, 3, 1)


def masks_to_tensor(masks: list[np.ndarray], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """
    Converts a list of `H×W` binary masks into an `N×1×H×W` tensor
    """
    return torch.from_numpy(np.stack(masks)[:, None].astype(np.float32)).to(dtype)


def read_png(path: str | Path) -> np.ndarray:
    try:
        with PILImage.open(path) as img:
            return from_uint8(np.asarray(img.convert("RGB")))
    except FileNotFoundError as e:
        raise DatasetFormatError(path, "Image file does not exist") from e
    except OSError as e:
        raise DatasetFormatError(path, f"Image file cannot be decoded ({e})") from e


def write_png(image: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(to_uint8(image)).save(path, format="PNG")


def read_mask_png(path: str | Path) -> np.ndarray:
    try:
        with PILImage.open(path) as img:
            return (np.asarray(img.convert("L")) >= 128).astype(np.uint8)
    except FileNotFoundError as e:
        raise DatasetFormatError(path, "Mask file does not exist") from e
    except OSError as e:
        raise DatasetFormatError(path, f"Mask file cannot be decoded ({e})") from e


def write_mask_png(mask: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path, format="PNG")
