"""
Objective terms of conditional cycle-consistent translation

All reductions are means over elements, so default weights do not depend on resolution.  Each function returns a
scalar tensor that stays attached to the autograd graph.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import torch

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

RoundTrip = Callable[[torch.Tensor], torch.Tensor]
BREAKDOWN_TERMS = ("adversarial_g", "adversarial_d", "cycle", "content", "identity", "mask", "total")


@dataclass(frozen=True)
class LossWeights:
    cycle: float = 10.0
    content: float = 1.0
    identity: float = 5.0
    mask: float = 10.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise InvalidArgumentError(f"Loss weight {name} must be >= 0, got {value}")

    def to_json(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class FeatureMap:
    tensor: torch.Tensor  # N×C×H×W
    layer_id: tuple[int, int]


@dataclass(frozen=True)
class LossBreakdown:
    """
    Unweighted generator-side terms and their weighted total; `objective` is the differentiable total
    """
    adversarial_g: float
    adversarial_d: float
    cycle: float
    content: float
    identity: float
    mask: float
    total: float
    objective: torch.Tensor | None = field(default=None, compare=False, repr=False)

    def to_json(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in BREAKDOWN_TERMS}


def __same_shape__(name: str, *tensors: torch.Tensor) -> None:
    shapes = {tuple(t.shape) for t in tensors}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"{name} needs tensors of one shape, got {sorted(shapes)}")


def lsgan_d_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """
    Least-squares discriminator loss: real patches pushed towards 1, fake patches towards 0
    """
    __same_shape__("lsgan_d_loss", d_real, d_fake)
    return torch.mean((d_real - 1) ** 2) + torch.mean(d_fake ** 2)


def lsgan_g_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return torch.mean((d_fake - 1) ** 2)


def l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.mean(torch.abs(a - b))


def cycle_loss(x: torch.Tensor, x_rec: torch.Tensor, y: torch.Tensor, y_rec: torch.Tensor) -> torch.Tensor:
    __same_shape__("cycle_loss", x, x_rec)
    __same_shape__("cycle_loss", y, y_rec)
    return l1(x_rec, x) + l1(y_rec, y)


def content_loss(feat_ref: FeatureMap, feat_gen: FeatureMap) -> torch.Tensor:
    """
    Mean squared feature difference, averaged over positions and channels
    """
    if tuple(feat_ref.layer_id) != tuple(feat_gen.layer_id):
        raise InvalidArgumentError(f"Cannot compare features of layers {feat_ref.layer_id} and {feat_gen.layer_id}")
    __same_shape__("content_loss", feat_ref.tensor, feat_gen.tensor)
    return torch.mean((feat_ref.tensor - feat_gen.tensor) ** 2)


def identity_loss(g_yx_of_x: torch.Tensor, x: torch.Tensor, g_xy_of_y: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    __same_shape__("identity_loss", g_yx_of_x, x)
    __same_shape__("identity_loss", g_xy_of_y, y)
    return l1(g_yx_of_x, x) + l1(g_xy_of_y, y)


def check_binary_mask(m: torch.Tensor) -> None:
    if not torch.all((m == 0) | (m == 1)):
        raise InvalidArgumentError("Face mask must be binary")


def mask_loss(x: torch.Tensor, m: torch.Tensor, round_trip: RoundTrip, background_weight: float = 0.0
              ) -> torch.Tensor:
    """
    One direction of the face mask loss: L1 between the round trip of the masked image and the masked image

    :param x: Images, `N×C×H×W` (or any shape `m` broadcasts to)
    :param m: Binary mask, `N×1×H×W` broadcast over channels
    :param round_trip: The composed pair of generators
    :param background_weight: Weight in [0, 1) given to background pixels instead of 0
    """
    check_binary_mask(m)
    if not 0.0 <= background_weight < 1.0:
        raise InvalidArgumentError(f"Background weight must lie in [0, 1), got {background_weight}")
    try:
        torch.broadcast_shapes(m.shape, x.shape)
    except RuntimeError as e:
        raise InvalidArgumentError(f"Mask of shape {tuple(m.shape)} does not fit images {tuple(x.shape)}") from e
    weights = m.to(x.dtype)
    if background_weight > 0:
        weights = weights + background_weight * (1 - weights)
    masked = x * weights
    return l1(round_trip(masked), masked)


def bidirectional_mask_loss(x: torch.Tensor, m_x: torch.Tensor, round_trip_x: RoundTrip,
                            y: torch.Tensor, m_y: torch.Tensor, round_trip_y: RoundTrip,
                            background_weight: float = 0.0) -> torch.Tensor:
    """
    Face mask loss of both directions, the term the generator objective weights
    """
    return (mask_loss(x, m_x, round_trip_x, background_weight)
            + mask_loss(y, m_y, round_trip_y, background_weight))


def require_finite(term: str, value: torch.Tensor | float) -> float:
    number = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
    if not math.isfinite(number):
        raise NumericalInstabilityError(term, number)
    return number


def total_loss(adversarial_g: torch.Tensor | float, cycle: torch.Tensor | float, content: torch.Tensor | float,
               identity: torch.Tensor | float, mask: torch.Tensor | float, weights: LossWeights,
               adversarial_d: torch.Tensor | float = 0.0) -> LossBreakdown:
    """
    Weighted generator objective, keeping every unweighted term

    :raises NumericalInstabilityError: Any term is NaN or infinite, naming the term
    """
    parts = {"adversarial_g": adversarial_g, "adversarial_d": adversarial_d, "cycle": cycle, "content": content,
             "identity": identity, "mask": mask}
    values = {name: require_finite(name, value) for name, value in parts.items()}
    objective = (adversarial_g + weights.cycle * cycle + weights.content * content
                 + weights.identity * identity + weights.mask * mask)
    total = require_finite("total", objective)
    return LossBreakdown(**values, total=total,
                         objective=objective if isinstance(objective, torch.Tensor) else None)
