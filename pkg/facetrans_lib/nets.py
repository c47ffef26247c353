"""
Conditional generator, patch discriminator and expression attribute vectors

The generator encodes an image with strided convolutions, flattens the features and concatenates the one-hot
attribute vector at a fully connected bottleneck, then decodes back to an image of the input's shape.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterator

import torch
from torch import nn

from facetrans_lib.exceptions import InvalidArgumentError
from facetrans_lib.faces_synth import ExpressionLabel

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

DISC_CONDITION_MODES = ("none", "tiled-concat")
INIT_STD = 0.02
LEAK = 0.2


@dataclass(frozen=True)
class ArchConfig:
    image_size: tuple[int, int] = (64, 64)
    channels: int = 3
    num_expressions: int = 4
    encoder_channels: tuple[int, ...] = (32, 64)
    bottleneck_width: int = 256
    disc_channels: tuple[int, ...] = (64, 128, 256)
    disc_condition: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        object.__setattr__(self, "encoder_channels", tuple(int(v) for v in self.encoder_channels))
        object.__setattr__(self, "disc_channels", tuple(int(v) for v in self.disc_channels))
        if self.num_expressions < 2:
            raise InvalidArgumentError(f"At least two expressions are required, got K={self.num_expressions}")
        if self.disc_condition not in DISC_CONDITION_MODES:
            raise InvalidArgumentError(
                f"Discriminator condition must be one of {', '.join(DISC_CONDITION_MODES)}, got {self.disc_condition}")
        if not self.encoder_channels or not self.disc_channels:
            raise InvalidArgumentError("Encoder and discriminator need at least one convolution each")
        for name, depth in (("generator", len(self.encoder_channels)), ("discriminator", len(self.disc_channels))):
            scale = 2 ** depth
            if any(s % scale for s in self.image_size):
                raise InvalidArgumentError(
                    f"Image size {self.image_size} is not divisible by {scale} as the {name} depth requires")

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        scale = 2 ** len(self.encoder_channels)
        return self.encoder_channels[-1], self.image_size[0] // scale, self.image_size[1] // scale

    @property
    def patch_shape(self) -> tuple[int, int]:
        scale = 2 ** len(self.disc_channels)
        return self.image_size[0] // scale, self.image_size[1] // scale

    def to_json(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @staticmethod
    def from_json(payload: dict[str, Any]) -> ArchConfig:
        return ArchConfig(**payload)


class Generator(nn.Module):
    """
    Encoder, attribute bottleneck and decoder; output in [-1, 1] with the input's shape
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        layers: list[nn.Module] = []
        in_channels = arch.channels
        for out_channels in arch.encoder_channels:
            layers += [nn.Conv2d(in_channels, out_channels, 4, stride=2, padding=1),
                       nn.InstanceNorm2d(out_channels), nn.ReLU()]
            in_channels = out_channels
        self.encoder = nn.Sequential(*layers)

        self.feature_shape = arch.feature_shape
        features = math.prod(self.feature_shape)
        self.bottleneck_in = nn.Linear(features + arch.num_expressions, arch.bottleneck_width)
        self.bottleneck_out = nn.Linear(arch.bottleneck_width, features)

        layers = []
        outputs = [*reversed(arch.encoder_channels[:-1]), arch.channels]
        for i, out_channels in enumerate(outputs):
            layers.append(nn.ConvTranspose2d(in_channels, out_channels, 4, stride=2, padding=1))
            if i < len(outputs) - 1:
                layers += [nn.InstanceNorm2d(out_channels), nn.ReLU()]
            in_channels = out_channels
        layers.append(nn.Tanh())
        self.decoder = nn.Sequential(*layers)

    def forward(self, image: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        flat = self.encoder(image).flatten(1)
        hidden = torch.relu(self.bottleneck_in(torch.cat([flat, z.to(flat.dtype)], dim=1)))
        restored = torch.relu(self.bottleneck_out(hidden)).view(-1, *self.feature_shape)
        return self.decoder(restored)


class PatchDiscriminator(nn.Module):
    """
    Strided convolution stack ending in a one-channel realness map, one value per receptive-field patch
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        self.condition_mode = arch.disc_condition
        in_channels = arch.channels + (arch.num_expressions if self.condition_mode == "tiled-concat" else 0)
        layers: list[nn.Module] = []
        for i, out_channels in enumerate(arch.disc_channels):
            layers.append(nn.Conv2d(in_channels, out_channels, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.InstanceNorm2d(out_channels))
            layers.append(nn.LeakyReLU(LEAK))
            in_channels = out_channels
        layers.append(nn.Conv2d(in_channels, 1, 3, stride=1, padding=1))
        self.layers = nn.Sequential(*layers)

    def forward(self, image: torch.Tensor, z: torch.Tensor | None = None) -> torch.Tensor:
        if self.condition_mode == "tiled-concat":
            if z is None:
                raise InvalidArgumentError("A tiled-concat discriminator needs the attribute vector")
            tiles = z.to(image.dtype)[:, :, None, None].expand(-1, -1, image.shape[2], image.shape[3])
            image = torch.cat([image, tiles], dim=1)
        return self.layers(image)


@dataclass
class Networks:
    """The four networks of a translation model"""
    arch: ArchConfig
    g_xy: Generator
    g_yx: Generator
    d_x: PatchDiscriminator
    d_y: PatchDiscriminator
    names: tuple[str, ...] = field(default=("g_xy", "g_yx", "d_x", "d_y"), init=False)

    def items(self) -> Iterator[tuple[str, nn.Module]]:
        for name in self.names:
            yield name, getattr(self, name)

    def generators(self) -> dict[str, nn.Module]:
        return {"g_xy": self.g_xy, "g_yx": self.g_yx}

    def discriminators(self) -> dict[str, nn.Module]:
        return {"d_x": self.d_x, "d_y": self.d_y}


def initialise(module: nn.Module, generator: torch.Generator, std: float = INIT_STD) -> nn.Module:
    """
    Draws every weight from N(0, std²) and zeroes every bias, in parameter registration order
    """
    with torch.no_grad():
        for name, param in module.named_parameters():
            if name.endswith("bias"):
                param.zero_()
            else:
                param.copy_(torch.randn(param.shape, generator=generator, dtype=param.dtype) * std)
    return module


def init_params(arch: ArchConfig, seed: int) -> Networks:
    """
    Builds and initialises both generators and both discriminators, deterministically from `seed`
    """
    generator = torch.Generator().manual_seed(int(seed))
    return Networks(
        arch=arch,
        g_xy=initialise(Generator(arch), generator),
        g_yx=initialise(Generator(arch), generator),
        d_x=initialise(PatchDiscriminator(arch), generator),
        d_y=initialise(PatchDiscriminator(arch), generator),
    )


def parameter_digest(module: nn.Module) -> str:
    digest = hashlib.sha256()
    for name, param in module.state_dict().items():
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def __label_index__(label: ExpressionLabel | int) -> int:
    return label.index if isinstance(label, ExpressionLabel) else int(label)


def encode_attribute(label: ExpressionLabel | int, num_expressions: int, dtype: torch.dtype = torch.float32
                     ) -> torch.Tensor:
    """
    One-hot attribute vector of length K with the 1 at the label's index

    :raises InvalidArgumentError: Index outside [0, K)
    """
    index = __label_index__(label)
    if not 0 <= index < num_expressions:
        raise InvalidArgumentError(f"Expression index {index} is out of range for K={num_expressions}")
    z = torch.zeros(num_expressions, dtype=dtype)
    z[index] = 1
    return z


def encode_attributes(labels: list[ExpressionLabel | int], num_expressions: int,
                      dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.stack([encode_attribute(label, num_expressions, dtype) for label in labels])


def check_one_hot(z: torch.Tensor, num_expressions: int | None = None) -> None:
    rows = z.reshape(-1, z.shape[-1]) if z.ndim else z.reshape(1, 1)
    if num_expressions is not None and rows.shape[1] != num_expressions:
        raise InvalidArgumentError(f"Attribute vector has width {rows.shape[1]}, expected K={num_expressions}")
    binary = torch.all((rows == 0) | (rows == 1))
    if not binary or not torch.all(rows.sum(dim=1) == 1):
        raise InvalidArgumentError("Attribute vector must be one-hot")


def swap_attribute(z: torch.Tensor, a: ExpressionLabel | int, b: ExpressionLabel | int) -> torch.Tensor:
    """
    Exchanges the entries at indices `a` and `b` of a one-hot vector (or of each row of a batch)

    :raises InvalidArgumentError: Input not one-hot, equal or out-of-range indices
    """
    check_one_hot(z)
    i, j = __label_index__(a), __label_index__(b)
    width = z.shape[-1]
    if i == j:
        raise InvalidArgumentError(f"Cannot swap expression index {i} with itself")
    if not (0 <= i < width and 0 <= j < width):
        raise InvalidArgumentError(f"Swap indices ({i}, {j}) out of range for K={width}")
    swapped = z.clone()
    swapped[..., i], swapped[..., j] = z[..., j], z[..., i]
    return swapped


def __check_images__(image: torch.Tensor, arch: ArchConfig) -> None:
    expected = (arch.channels, *arch.image_size)
    if image.ndim != 4 or tuple(image.shape[1:]) != expected:
        raise InvalidArgumentError(f"Expected images of shape N×{'×'.join(map(str, expected))}, "
                                   f"got {tuple(image.shape)}")


def __batch_attribute__(z: torch.Tensor | None, batch: int, arch: ArchConfig) -> torch.Tensor:
    if z is None:
        return torch.zeros(batch, arch.num_expressions)
    check_one_hot(z, arch.num_expressions)
    z = z.reshape(-1, arch.num_expressions)
    if z.shape[0] == 1 and batch > 1:
        z = z.expand(batch, -1)
    if z.shape[0] != batch:
        raise InvalidArgumentError(f"Got {z.shape[0]} attribute vectors for {batch} images")
    return z


def generator_forward(generator: Generator, image: torch.Tensor, z: torch.Tensor | None) -> torch.Tensor:
    """
    Validated generator pass; `z=None` feeds an all-zero attribute block (unconditioned model)

    :raises InvalidArgumentError: Image shape or attribute width disagrees with the architecture, or z not one-hot
    """
    __check_images__(image, generator.arch)
    return generator(image, __batch_attribute__(z, image.shape[0], generator.arch))


def discriminator_forward(discriminator: PatchDiscriminator, image: torch.Tensor,
                          z: torch.Tensor | None = None) -> torch.Tensor:
    """
    Validated discriminator pass returning an `N×1×h×w` realness map; `z` is ignored unless tiled-concat
    """
    __check_images__(image, discriminator.arch)
    if discriminator.condition_mode == "none":
        return discriminator(image)
    if z is None:
        raise InvalidArgumentError("A tiled-concat discriminator needs the attribute vector")
    return discriminator(image, __batch_attribute__(z, image.shape[0], discriminator.arch))
