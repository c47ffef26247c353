"""
Procedurally rendered faces with analytic labels, landmarks and masks

Every face is an ellipse of skin over a cluttered background.  The expression is drawn into the mouth, brows and eyes
with deliberately large geometric differences; everything an expression changes lies strictly inside the face ellipse,
so two renders of one identity differ only inside its mask.

Coordinates are continuous `(row, col)` pairs in pixel units: pixel `(r, c)` covers `[r, r+1) × [c, c+1)` and its
centre is `(r + 0.5, c + 0.5)`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from facetrans_lib.exceptions import DatasetFormatError, InvalidArgumentError
from facetrans_lib.images import from_uint8, read_mask_png, read_png, write_mask_png, write_png
from facetrans_lib.sinks.serializers import Serializers

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

MIN_SIZE = 32
DEFAULT_SIZE = (64, 64)
EDGE_MARGIN = 2.0
INDEX_FILE = "index.json"
DATASET_FORMAT = "facetrans-dataset"
DATASET_FORMAT_VERSION = 1
LANDMARK_SCHEMA = "facetrans-20"
OPENFACE_SCHEMA = "openface68"

EXPRESSION_NAMES = ("neutral", "happy", "anger", "surprise", "sad", "disgust", "fear")
DEFAULT_EXPRESSIONS = ("neutral", "happy", "anger", "surprise")

OUTLINE_POINTS = 8
LANDMARK_NAMES: tuple[str, ...] = (
    *(f"outline_{k}" for k in range(OUTLINE_POINTS)),
    "left_brow_outer", "left_brow_inner", "left_eye_outer", "left_eye_inner",
    "right_brow_inner", "right_brow_outer", "right_eye_inner", "right_eye_outer",
    "mouth_left", "mouth_top", "mouth_right", "mouth_bottom",
)

# 68-point indices feeding each slot of the 20-point schema, in LANDMARK_NAMES order
OPENFACE_TO_SCHEMA: tuple[int, ...] = (
    0, 3, 6, 8, 10, 13, 16, 27,
    17, 21, 36, 39,
    22, 26, 42, 45,
    48, 51, 54, 57,
)

SKIN_DARK = (40, 25, 20)
EYE_WHITE = (240, 240, 235)
PUPIL = (20, 20, 40)
MOUTH_INSIDE = (90, 10, 20)
LIPS = (120, 30, 30)


@dataclass(frozen=True, order=True)
class ExpressionLabel:
    index: int
    name: str


def expression_catalogue(names: Iterable[str | ExpressionLabel] = DEFAULT_EXPRESSIONS) -> tuple[ExpressionLabel, ...]:
    """
    Builds the ordered expression labels for a list of names

    :param names: Expression names, the first must be "neutral"
    :raises InvalidArgumentError: Unknown, duplicated or mis-ordered names, or fewer than two expressions
    """
    resolved = [n.name if isinstance(n, ExpressionLabel) else str(n).strip().lower() for n in names]
    if len(resolved) < 2:
        raise InvalidArgumentError("At least two expressions are required, neutral and one other")
    if resolved[0] != "neutral":
        raise InvalidArgumentError(f"The first expression must be neutral, got {resolved[0]}")
    if len(set(resolved)) != len(resolved):
        raise InvalidArgumentError(f"Expression names must be unique: {', '.join(resolved)}")
    unknown = [n for n in resolved if n not in EXPRESSION_NAMES]
    if unknown:
        raise InvalidArgumentError(
            f"Cannot render expression(s) {', '.join(unknown)}; known expressions are {', '.join(EXPRESSION_NAMES)}")
    return tuple(ExpressionLabel(i, n) for i, n in enumerate(resolved))


def find_expression(expressions: Sequence[ExpressionLabel], name_or_index: str | int) -> ExpressionLabel:
    for label in expressions:
        if label.name == name_or_index or label.index == name_or_index:
            return label
    raise InvalidArgumentError(
        f"Unknown expression {name_or_index}; valid expressions are {', '.join(e.name for e in expressions)}")


@dataclass(frozen=True)
class ExpressionGeometry:
    """Shape of one expression, lengths are fractions of the face's vertical semi-axis"""
    mouth_shape: str = "curve"  # curve | round | oval
    bend: float = 0.0  # > 0 raises the mouth corners
    opening: float = 0.0
    slant: float = 0.0
    brow_raise: float = 0.0
    brow_tilt: float = 0.0  # > 0 lowers the inner brow ends
    eye_open: float = 1.0


EXPRESSION_GEOMETRY: dict[str, ExpressionGeometry] = {
    "neutral": ExpressionGeometry(),
    "happy": ExpressionGeometry(bend=0.16, brow_raise=0.03, eye_open=0.8),
    "anger": ExpressionGeometry(bend=-0.12, opening=0.14, brow_raise=-0.04, brow_tilt=0.10, eye_open=0.9),
    "surprise": ExpressionGeometry(mouth_shape="round", opening=0.30, brow_raise=0.12, eye_open=1.4),
    "sad": ExpressionGeometry(bend=-0.16, brow_tilt=-0.08, eye_open=0.9),
    "disgust": ExpressionGeometry(bend=-0.04, slant=0.10, brow_raise=-0.02, brow_tilt=0.05, eye_open=0.7),
    "fear": ExpressionGeometry(mouth_shape="oval", opening=0.10, brow_raise=0.08, brow_tilt=-0.08, eye_open=1.3),
}


@dataclass(frozen=True)
class IdentitySpec:
    skin_tone: tuple[float, float, float]
    face_axes: tuple[float, float]  # (vertical, horizontal) semi-axes in pixels
    eye_spacing: float
    background_seed: int
    jitter: tuple[float, float]  # (dx, dy) offset of the face centre from the image centre

    def centre(self, size: tuple[int, int]) -> tuple[float, float]:
        height, width = size
        return height / 2.0 + self.jitter[1], width / 2.0 + self.jitter[0]

    def fits(self, size: tuple[int, int], margin: float = EDGE_MARGIN) -> bool:
        height, width = size
        cy, cx = self.centre(size)
        a, b = self.face_axes
        return cy - a >= margin and cy + a <= height - margin and cx - b >= margin and cx + b <= width - margin


@dataclass(frozen=True)
class Landmarks:
    points: tuple[tuple[float, float], ...]
    names: tuple[str, ...] = LANDMARK_NAMES

    def __post_init__(self):
        if len(self.points) != len(self.names):
            raise InvalidArgumentError(f"Got {len(self.points)} landmark points for {len(self.names)} names")

    @property
    def count(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    def outline(self) -> np.ndarray:
        return self.as_array()[[i for i, n in enumerate(self.names) if n.startswith("outline_")]]

    def to_json(self) -> dict[str, Any]:
        return {"schema": LANDMARK_SCHEMA, "names": list(self.names), "points": [list(p) for p in self.points]}

    @staticmethod
    def from_json(payload: Any, path: str | Path = "<memory>") -> Landmarks:
        """
        Parses either the 20-point schema written by `save_dataset` or an OpenFace 68-point file

        OpenFace files are `{"format": "openface68", "points": [[x, y], ...]}` or a bare list of 68 `[x, y]` pairs.
        """
        try:
            if isinstance(payload, list):
                payload = {"format": OPENFACE_SCHEMA, "points": payload}
            points = payload["points"]
            if payload.get("format") == OPENFACE_SCHEMA or len(points) == 68:
                return Landmarks.from_openface(points)
            names = tuple(payload.get("names", LANDMARK_NAMES))
            return Landmarks(tuple((float(p[0]), float(p[1])) for p in points), names)
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise DatasetFormatError(path, f"Landmark file is not in a known format ({e})") from e

    @staticmethod
    def from_openface(points: Sequence[Sequence[float]]) -> Landmarks:
        """
        Converts OpenFace's 68 `(x, y)` points into the 20-point `(row, col)` schema
        """
        if len(points) != 68:
            raise InvalidArgumentError(f"OpenFace landmarks have 68 points, got {len(points)}")
        return Landmarks(tuple((float(points[i][1]), float(points[i][0])) for i in OPENFACE_TO_SCHEMA))


@dataclass(eq=False)
class Sample:
    image: np.ndarray
    label: ExpressionLabel
    mask: np.ndarray | None  # None when absent, e.g. externally supplied images
    landmarks: Landmarks
    identity_id: int

    @property
    def key(self) -> str:
        return f"{self.identity_id:05d}_{self.label.name}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        if (self.mask is None) != (other.mask is None):
            return False
        return (self.label == other.label and self.identity_id == other.identity_id
                and self.landmarks == other.landmarks and np.array_equal(self.image, other.image)
                and (self.mask is None or np.array_equal(self.mask, other.mask)))


@dataclass(eq=False)
class DatasetSplit:
    domain_x: list[Sample]
    domain_y: list[Sample]
    test_x: list[Sample]
    test_y: list[Sample]
    expressions: tuple[ExpressionLabel, ...]
    size: tuple[int, int] = DEFAULT_SIZE
    seed: int | None = None
    test_fraction: float | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        shared = identity_ids(self.domain_x) & identity_ids(self.domain_y)
        if shared:
            raise InvalidArgumentError(
                f"Domains X and Y must not share identities, both contain {sorted(shared)[:10]}")
        self.size = (int(self.size[0]), int(self.size[1]))
        self.expressions = tuple(self.expressions)

    @property
    def n(self) -> int:
        return len(self.domain_x)

    @property
    def m(self) -> int:
        return len(self.domain_y)

    @property
    def num_expressions(self) -> int:
        return len(self.expressions)

    def train_samples(self) -> list[Sample]:
        return [*self.domain_x, *self.domain_y]

    def test_samples(self) -> list[Sample]:
        return [*self.test_x, *self.test_y]

    def partitions(self) -> dict[str, list[Sample]]:
        return {"domain_x": self.domain_x, "domain_y": self.domain_y, "test_x": self.test_x, "test_y": self.test_y}

    def content_hash(self) -> str:
        """
        SHA-256 over every sample's key, label, identity, pixels, mask and landmarks, partition by partition
        """
        digest = hashlib.sha256()
        digest.update(json.dumps([e.name for e in self.expressions]).encode())
        digest.update(repr(self.size).encode())
        for name, samples in self.partitions().items():
            digest.update(name.encode())
            for s in samples:
                digest.update(f"{s.key}|{s.label.index}|{s.identity_id}".encode())
                digest.update(np.ascontiguousarray(s.image).tobytes())
                if s.mask is not None:
                    digest.update(np.ascontiguousarray(s.mask).tobytes())
                digest.update(json.dumps(s.landmarks.to_json()).encode())
        return digest.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (self.expressions == other.expressions and self.size == other.size and self.seed == other.seed
                and self.test_fraction == other.test_fraction
                and all(a == b for a, b in zip(self.partitions().values(), other.partitions().values())))


def identity_ids(samples: Iterable[Sample]) -> set[int]:
    return {s.identity_id for s in samples}


def __validate_size__(size: Sequence[int]) -> tuple[int, int]:
    if len(size) != 2:
        raise InvalidArgumentError(f"Image size must be (H, W), got {size}")
    height, width = int(size[0]), int(size[1])
    if height < MIN_SIZE or width < MIN_SIZE:
        raise InvalidArgumentError(f"Image size must be at least {MIN_SIZE}×{MIN_SIZE}, got {height}×{width}")
    return height, width


def default_dilation_radius(height: int) -> int:
    """
    Mask dilation radius for an image height: 3 at 64 pixels, scaled proportionally
    """
    return max(1, int(round(3 * height / 64)))


def identity_spec(dataset_seed: int, identity_id: int, size: Sequence[int] = DEFAULT_SIZE) -> IdentitySpec:
    """
    Derives the identity parameters deterministically from `(dataset_seed, identity_id)`
    """
    height, width = __validate_size__(size)
    rng = np.random.default_rng([int(dataset_seed), int(identity_id)])
    a = height * rng.uniform(0.36, 0.42)
    b = width * rng.uniform(0.28, 0.34)
    dy = rng.uniform(-1.0, 1.0) * max(0.0, min(0.05 * height, height / 2.0 - a - EDGE_MARGIN))
    dx = rng.uniform(-1.0, 1.0) * max(0.0, min(0.05 * width, width / 2.0 - b - EDGE_MARGIN))
    red = rng.uniform(0.55, 0.95)
    green = red * rng.uniform(0.70, 0.85)
    blue = green * rng.uniform(0.70, 0.90)
    return IdentitySpec(
        skin_tone=(float(red), float(green), float(blue)),
        face_axes=(float(a), float(b)),
        eye_spacing=float(b * rng.uniform(0.75, 0.90)),
        background_seed=int(rng.integers(0, 2 ** 31 - 1)),
        jitter=(float(dx), float(dy)),
    )


def ellipse_mask(identity: IdentitySpec, size: Sequence[int]) -> np.ndarray:
    """
    The analytic face mask: pixel is 1 iff its centre lies inside (or on) the face ellipse
    """
    height, width = int(size[0]), int(size[1])
    cy, cx = identity.centre((height, width))
    a, b = identity.face_axes
    rows = (np.arange(height, dtype=np.float64) + 0.5 - cy) / a
    cols = (np.arange(width, dtype=np.float64) + 0.5 - cx) / b
    return ((rows[:, None] ** 2 + cols[None, :] ** 2) <= 1.0).astype(np.uint8)


def render_background(seed: int, size: Sequence[int]) -> np.ndarray:
    """
    Clutter of random rectangles and ellipses, a pure function of `seed`
    """
    height, width = int(size[0]), int(size[1])
    rng = np.random.default_rng(int(seed))
    canvas = PILImage.new("RGB", (width, height), tuple(int(v) for v in rng.integers(60, 200, size=3)))
    draw = ImageDraw.Draw(canvas)
    for _ in range(int(rng.integers(6, 12))):
        x0 = rng.uniform(-0.2, 1.0) * width
        y0 = rng.uniform(-0.2, 1.0) * height
        x1 = x0 + rng.uniform(0.1, 0.5) * width
        y1 = y0 + rng.uniform(0.1, 0.5) * height
        colour = tuple(int(v) for v in rng.integers(0, 256, size=3))
        if rng.random() < 0.5:
            draw.rectangle([x0, y0, x1, y1], fill=colour)
        else:
            draw.ellipse([x0, y0, x1, y1], fill=colour)
    return np.asarray(canvas, dtype=np.uint8)


def __mouth_outline__(geometry: ExpressionGeometry, mouth_row: float, cx: float, half_width: float,
                      a: float) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """
    Upper and lower lip curves as (row, col) points, identical when the mouth is closed
    """
    upper, lower = [], []
    for t in np.linspace(-1.0, 1.0, 13):
        centre = mouth_row + geometry.bend * a * (t * t - 0.5) + geometry.slant * a * t
        gap = 0.5 * geometry.opening * a * (1.0 - t * t)
        upper.append((float(centre - gap), float(cx + t * half_width)))
        lower.append((float(centre + gap), float(cx + t * half_width)))
    return upper, lower


def __xy__(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    return [(c, r) for r, c in points]


def render_face(identity: IdentitySpec, expression: ExpressionLabel, size: Sequence[int] = DEFAULT_SIZE,
                identity_id: int = 0) -> Sample:
    """
    Renders one identity wearing one expression

    :param identity: Identity parameters, see `identity_spec()`
    :param expression: Expression to draw
    :param size: (H, W), at least 32×32
    :param identity_id: Identity id recorded on the sample
    :raises InvalidArgumentError: Size too small, or the face ellipse does not fit with a 2 pixel margin
    """
    height, width = __validate_size__(size)
    if not identity.fits((height, width)):
        raise InvalidArgumentError(
            f"Face with semi-axes {identity.face_axes} and jitter {identity.jitter} does not fit in {height}×{width}")
    geometry = EXPRESSION_GEOMETRY.get(expression.name)
    if geometry is None or expression.index < 0:
        raise InvalidArgumentError(f"Cannot render expression {expression}")

    cy, cx = identity.centre((height, width))
    a, b = identity.face_axes
    line_width = max(1, int(round(height / 32)))
    skin = tuple(int(round(255 * v)) for v in identity.skin_tone)
    shade = tuple(int(v * 0.8) for v in skin)

    face = PILImage.new("RGB", (width, height), skin)
    draw = ImageDraw.Draw(face)

    eye_row = cy - 0.15 * a
    brow_row = eye_row - 0.18 * a - geometry.brow_raise * a
    eye_half_width = 0.17 * b
    eye_half_height = 0.08 * a * geometry.eye_open
    pupil = 0.6 * min(eye_half_width, eye_half_height)

    eyes = {}
    for side, ex in (("left", cx - identity.eye_spacing / 2.0), ("right", cx + identity.eye_spacing / 2.0)):
        inward = 1.0 if side == "left" else -1.0
        inner_col = ex + inward * 0.15 * b
        outer_col = ex - inward * 0.20 * b
        inner_row = brow_row + geometry.brow_tilt * a / 2.0
        outer_row = brow_row - geometry.brow_tilt * a / 2.0
        draw.line(__xy__([(outer_row, outer_col), (inner_row, inner_col)]), fill=SKIN_DARK, width=line_width)
        draw.ellipse([ex - eye_half_width, eye_row - eye_half_height, ex + eye_half_width, eye_row + eye_half_height],
                     fill=EYE_WHITE, outline=SKIN_DARK)
        draw.ellipse([ex - pupil, eye_row - pupil, ex + pupil, eye_row + pupil], fill=PUPIL)
        eyes[side] = {
            "brow_outer": (outer_row, outer_col), "brow_inner": (inner_row, inner_col),
            "eye_outer": (eye_row, ex - inward * eye_half_width), "eye_inner": (eye_row, ex + inward * eye_half_width),
        }

    draw.line(__xy__([(eye_row + 0.12 * a, cx), (cy + 0.2 * a, cx)]), fill=shade, width=line_width)

    mouth_row = cy + 0.45 * a
    mouth_half_width = 0.40 * b
    if geometry.mouth_shape == "round":
        radius = 0.5 * geometry.opening * a
        draw.ellipse([cx - radius, mouth_row - radius, cx + radius, mouth_row + radius],
                     fill=MOUTH_INSIDE, outline=LIPS)
        mouth = [(mouth_row, cx - radius), (mouth_row - radius, cx), (mouth_row, cx + radius), (mouth_row + radius, cx)]
    elif geometry.mouth_shape == "oval":
        rx, ry = 0.8 * mouth_half_width, 0.5 * geometry.opening * a
        draw.ellipse([cx - rx, mouth_row - ry, cx + rx, mouth_row + ry], fill=MOUTH_INSIDE, outline=LIPS)
        mouth = [(mouth_row, cx - rx), (mouth_row - ry, cx), (mouth_row, cx + rx), (mouth_row + ry, cx)]
    else:
        upper, lower = __mouth_outline__(geometry, mouth_row, cx, mouth_half_width, a)
        if geometry.opening > 0:
            draw.polygon(__xy__(upper + lower[::-1]), fill=MOUTH_INSIDE, outline=LIPS)
        else:
            draw.line(__xy__(upper), fill=LIPS, width=line_width, joint="curve")
        middle = len(upper) // 2
        mouth = [upper[0], (min(r for r, _ in upper), upper[middle][1]), upper[-1],
                 (max(r for r, _ in lower), lower[middle][1])]

    mask = ellipse_mask(identity, (height, width))
    background = render_background(identity.background_seed, (height, width))
    pixels = np.where(mask[:, :, None] == 1, np.asarray(face, dtype=np.uint8), background)

    landmarks = Landmarks(tuple((float(r), float(c)) for r, c in (
        *face_outline_points(identity, (height, width)),
        eyes["left"]["brow_outer"], eyes["left"]["brow_inner"], eyes["left"]["eye_outer"], eyes["left"]["eye_inner"],
        eyes["right"]["brow_inner"], eyes["right"]["brow_outer"],
        eyes["right"]["eye_inner"], eyes["right"]["eye_outer"],
        *mouth,
    )))
    return Sample(image=from_uint8(pixels), label=expression, mask=mask, landmarks=landmarks, identity_id=identity_id)


def face_outline_points(identity: IdentitySpec, size: Sequence[int],
                        dilation_radius: float | None = None) -> list[tuple[float, float]]:
    """
    Eight contour points, clockwise from the top of the face

    The points sit just inside the face edge, so that their convex hull dilated by the default mask radius covers the
    face ellipse: the octagon's median radial extent plus the radius matches the ellipse.
    """
    height = int(size[0])
    if dilation_radius is None:
        dilation_radius = default_dilation_radius(height)
    cy, cx = identity.centre(size)
    a, b = identity.face_axes
    median_extent = math.cos(math.pi / OUTLINE_POINTS) / math.cos(math.pi / (2 * OUTLINE_POINTS))
    inner_a = max(1.0, (a - dilation_radius) / median_extent)
    inner_b = max(1.0, (b - dilation_radius) / median_extent)
    inner_a, inner_b = min(inner_a, a), min(inner_b, b)
    return [(cy - inner_a * math.cos(theta), cx + inner_b * math.sin(theta))
            for theta in (2.0 * math.pi * k / OUTLINE_POINTS for k in range(OUTLINE_POINTS))]


def __non_neutral__(expressions: Sequence[ExpressionLabel]) -> list[ExpressionLabel]:
    return [e for e in expressions if e.index != 0]


def generate_dataset(n_identities: int, expressions: Sequence[str | ExpressionLabel] = DEFAULT_EXPRESSIONS,
                     size: Sequence[int] = DEFAULT_SIZE, seed: int = 0, test_fraction: float = 0.2,
                     expressions_per_identity: int | None = None) -> DatasetSplit:
    """
    Generates an unpaired, identity-disjoint dataset split

    Identities are shuffled by `seed`; `test_fraction` of them (at least two) are held out for testing and the rest are
    halved between domain X, rendered neutral, and domain Y, rendered in non-neutral expressions.  The held-out
    identities are split the same way into `test_x` and `test_y`.

    :param n_identities: Number of identities, at least 4
    :param expressions: Expression names or labels, neutral first
    :param size: (H, W)
    :param seed: Dataset seed, the split is a pure function of the arguments
    :param test_fraction: Fraction of identities held out, in (0, 0.5)
    :param expressions_per_identity:
        Number of non-neutral expressions rendered per domain Y identity, default all of them.  When fewer, each
        identity starts at a different expression so that every class stays represented.
    """
    expressions = expression_catalogue(expressions)
    height, width = __validate_size__(size)
    if n_identities < 4:
        raise InvalidArgumentError(f"At least 4 identities are needed for disjoint splits, got {n_identities}")
    if not 0.0 < test_fraction < 0.5:
        raise InvalidArgumentError(f"test_fraction must lie in (0, 0.5), got {test_fraction}")
    targets = __non_neutral__(expressions)
    per_identity = len(targets) if expressions_per_identity is None else int(expressions_per_identity)
    if not 1 <= per_identity <= len(targets):
        raise InvalidArgumentError(f"expressions_per_identity must lie in [1, {len(targets)}], got {per_identity}")

    rng = np.random.default_rng(int(seed))
    order = [int(i) for i in rng.permutation(n_identities)]
    n_test = max(2, int(round(n_identities * test_fraction)))
    if n_identities - n_test < 2:
        raise InvalidArgumentError(f"{n_identities} identities leave too few for training with test_fraction "
                                   f"{test_fraction}")
    train_ids, test_ids = order[:n_identities - n_test], order[n_identities - n_test:]
    half_train, half_test = len(train_ids) // 2, len(test_ids) // 2

    def neutral(ids: list[int]) -> list[Sample]:
        return [render_face(identity_spec(seed, i, (height, width)), expressions[0], (height, width), i)
                for i in sorted(ids)]

    def expressive(ids: list[int]) -> list[Sample]:
        samples = []
        for i in sorted(ids):
            spec = identity_spec(seed, i, (height, width))
            for k in range(per_identity):
                label = targets[(i + k) % len(targets)] if per_identity < len(targets) else targets[k]
                samples.append(render_face(spec, label, (height, width), i))
        return samples

    split = DatasetSplit(
        domain_x=neutral(train_ids[:half_train]), domain_y=expressive(train_ids[half_train:]),
        test_x=neutral(test_ids[:half_test]), test_y=expressive(test_ids[half_test:]),
        expressions=expressions, size=(height, width), seed=int(seed), test_fraction=float(test_fraction),
    )
    train, test = identity_ids(split.train_samples()), identity_ids(split.test_samples())
    assert not (train & test), "train and test identities overlap"
    logger.info(f"Generated dataset with N={split.n}, M={split.m}, {len(split.test_samples())} test samples, "
                f"K={len(expressions)}")
    return split


def save_dataset(split: DatasetSplit, directory: str | Path) -> Path:
    """
    Writes `images/`, `landmarks/`, `masks/` and the `index.json` that is the single source of truth

    :return: Path of the written index
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    partitions: dict[str, list[dict[str, Any]]] = {}
    for name, samples in split.partitions().items():
        entries = []
        for s in samples:
            image_path = f"images/{s.key}.png"
            landmark_path = f"landmarks/{s.key}.json"
            mask_path = f"masks/{s.key}.png" if s.mask is not None else None
            write_png(s.image, root / image_path)
            (root / landmark_path).parent.mkdir(parents=True, exist_ok=True)
            (root / landmark_path).write_text(Serializers.to_pretty_json(s.landmarks.to_json()) + "\n",
                                              encoding="utf-8")
            if mask_path is not None:
                write_mask_png(s.mask, root / mask_path)
            entries.append({"key": s.key, "identity_id": s.identity_id, "label": s.label.name,
                            "image": image_path, "landmarks": landmark_path, "mask": mask_path})
        partitions[name] = entries

    index = {
        "format": DATASET_FORMAT, "version": DATASET_FORMAT_VERSION,
        "seed": split.seed, "size": list(split.size), "K": split.num_expressions,
        "expressions": [e.name for e in split.expressions], "test_fraction": split.test_fraction,
        "counts": {"N": split.n, "M": split.m, "test_x": len(split.test_x), "test_y": len(split.test_y)},
        "splits": partitions,
    }
    index_path = root / INDEX_FILE
    index_path.write_text(Serializers.to_pretty_json(index) + "\n", encoding="utf-8")
    logger.info(f"Saved dataset to {root}")
    return index_path


def __read_json__(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DatasetFormatError(path, "File does not exist") from e
    except json.JSONDecodeError as e:
        raise DatasetFormatError(path, f"File is not valid JSON ({e.msg})") from e


def load_dataset(directory: str | Path) -> DatasetSplit:
    """
    Loads a dataset directory written by `save_dataset()` or assembled by hand around external images

    Entries whose `mask` is null load with `Sample.mask = None`; fill them with `mask.fill_missing_masks()`.

    :raises DatasetFormatError: Missing or corrupt index, image, mask or landmark file, naming the file
    """
    root = Path(directory)
    index_path = root / INDEX_FILE
    if not index_path.is_file():
        raise DatasetFormatError(index_path, "Dataset index does not exist")
    index = __read_json__(index_path)
    try:
        expressions = expression_catalogue(index["expressions"])
        size = tuple(index["size"])
        partitions = {name: index["splits"].get(name, []) for name in ("domain_x", "domain_y", "test_x", "test_y")}
    except (KeyError, TypeError, AttributeError, InvalidArgumentError) as e:
        raise DatasetFormatError(index_path, f"Dataset index is malformed ({e})") from e

    loaded: dict[str, list[Sample]] = {}
    for name, entries in partitions.items():
        samples = []
        for entry in entries:
            try:
                label = find_expression(expressions, entry["label"])
                landmark_file = root / entry["landmarks"]
                image_file = root / entry["image"]
                mask_file = root / entry["mask"] if entry.get("mask") else None
                identity = int(entry["identity_id"])
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetFormatError(index_path, f"Malformed entry in {name} ({e})") from e
            samples.append(Sample(
                image=read_png(image_file), label=label,
                mask=read_mask_png(mask_file) if mask_file is not None else None,
                landmarks=Landmarks.from_json(__read_json__(landmark_file), landmark_file),
                identity_id=identity,
            ))
        loaded[name] = samples

    return DatasetSplit(**loaded, expressions=expressions, size=size, seed=index.get("seed"),
                        test_fraction=index.get("test_fraction"))
