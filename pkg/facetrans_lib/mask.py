"""
Binary face masks from landmarks: convex-hull fill followed by a Euclidean disk dilation

A pixel `(r, c)` lies inside the hull iff its centre `(r + 0.5, c + 0.5)` satisfies every hull half-plane inequality,
boundary included.
"""
from __future__ import annotations

import logging
from dataclasses import replace
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from facetrans_lib.exceptions import DegenerateLandmarksError, InvalidArgumentError
from facetrans_lib.faces_synth import DatasetSplit, Landmarks, Sample, default_dilation_radius

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

HULL_TOLERANCE = 1e-9


def __points__(landmarks: Landmarks | np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    if isinstance(landmarks, Landmarks):
        return landmarks.as_array()
    return np.asarray(landmarks, dtype=np.float64).reshape(-1, 2)


def hull_fill(landmarks: Landmarks | np.ndarray | Sequence[Sequence[float]], size: Sequence[int]) -> np.ndarray:
    """
    Fills the convex hull of the landmark points, clipped to the image

    :raises DegenerateLandmarksError: Fewer than three points, or all points collinear
    """
    points = __points__(landmarks)
    if len(points) < 3:
        raise DegenerateLandmarksError(f"A face mask needs at least 3 landmarks, got {len(points)}")
    if np.linalg.matrix_rank(points - points.mean(axis=0), tol=HULL_TOLERANCE) < 2:
        raise DegenerateLandmarksError("All landmark points are collinear")
    try:
        hull = ConvexHull(points)
    except QhullError as e:
        raise DegenerateLandmarksError(f"Cannot build a convex hull from the landmarks ({e})") from e

    height, width = int(size[0]), int(size[1])
    rows, cols = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    centres = np.stack([rows.ravel(), cols.ravel()], axis=1)
    # equations rows are (normal_r, normal_c, offset) with normal·p + offset <= 0 inside
    distances = centres @ hull.equations[:, :2].T + hull.equations[:, 2]
    inside = np.all(distances <= HULL_TOLERANCE, axis=1)
    return inside.reshape(height, width).astype(np.uint8)


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """
    A pixel becomes 1 iff some 1-pixel lies within Euclidean distance `radius` of it
    """
    if radius < 0:
        raise InvalidArgumentError(f"Dilation radius must be >= 0, got {radius}")
    mask = np.asarray(mask)
    if radius == 0:
        return (mask > 0).astype(np.uint8)
    if not mask.any():
        return np.zeros(mask.shape, dtype=np.uint8)
    distance = ndimage.distance_transform_edt(mask == 0)
    return (distance <= radius).astype(np.uint8)


def landmarks_to_mask(landmarks: Landmarks | np.ndarray | Sequence[Sequence[float]], size: Sequence[int],
                      dilation_radius: float | None = None) -> np.ndarray:
    """
    Computes the binary face mask of a landmark set

    :param landmarks: Landmarks or an array of `(row, col)` points
    :param size: (H, W) of the paired image
    :param dilation_radius: Disk radius in pixels, defaults to 3 at 64 pixels high scaled with the height
    :raises DegenerateLandmarksError: Fewer than three non-collinear points
    :raises InvalidArgumentError: Negative radius
    """
    if dilation_radius is None:
        dilation_radius = default_dilation_radius(int(size[0]))
    if dilation_radius < 0:
        raise InvalidArgumentError(f"Dilation radius must be >= 0, got {dilation_radius}")
    return dilate(hull_fill(landmarks, size), dilation_radius)


def apply_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Pixel-wise product of an `H×W` or `H×W×C` image with an `H×W` mask, the mask broadcast over channels
    """
    image = np.asarray(image)
    mask = np.asarray(mask)
    if mask.ndim != 2 or image.shape[:2] != mask.shape or image.ndim not in (2, 3):
        raise InvalidArgumentError(f"Cannot mask an image of shape {image.shape} with a mask of shape {mask.shape}")
    weights = mask.astype(image.dtype if np.issubdtype(image.dtype, np.floating) else np.float32)
    return image * (weights if image.ndim == 2 else weights[:, :, None])


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a) > 0, np.asarray(b) > 0
    if a.shape != b.shape:
        raise InvalidArgumentError(f"Mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 1.0


def fill_missing_masks(split: DatasetSplit, dilation_radius: float | None = None,
                       overwrite: bool = False) -> DatasetSplit:
    """
    Returns a copy of the split where every sample without a mask gets one computed from its landmarks

    :param overwrite: Recompute masks that are already present too
    """
    def fill(sample: Sample) -> Sample:
        if sample.mask is not None and not overwrite:
            return sample
        return replace(sample, mask=landmarks_to_mask(sample.landmarks, sample.image.shape[:2], dilation_radius))

    filled = {name: [fill(s) for s in samples] for name, samples in split.partitions().items()}
    computed = sum(1 for name, samples in split.partitions().items()
                   for before, after in zip(samples, filled[name]) if before is not after)
    logger.info(f"Computed {computed} masks from landmarks")
    return replace(split, **filled)
