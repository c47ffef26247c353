"""
A small convolutional expression classifier

It plays three parts: its intermediate activations are the perceptual features of the content loss, its class
posterior scores generated images, and it is the recognition model of the augmentation experiment.  Layer `(i, j)` is
the j-th convolution of the i-th stage, each stage ending in a 2×2 max-pooling.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from facetrans_lib.checkpoints import load_checkpoint, save_checkpoint
from facetrans_lib.exceptions import CheckpointError, InvalidArgumentError
from facetrans_lib.faces_synth import ExpressionLabel, Sample, expression_catalogue
from facetrans_lib.images import to_tensor
from facetrans_lib.losses import FeatureMap
from facetrans_lib.optim import ModuleAdam

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

STAGES: tuple[tuple[int, ...], ...] = ((16,), (32, 32), (64, 64))
DEFAULT_LAYER = (2, 2)
INFERENCE_CHUNK = 256


@dataclass(frozen=True)
class ClassifierConfig:
    steps: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    validation_fraction: float = 0.1
    feature_dim: int = 128

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.feature_dim < 1:
            raise InvalidArgumentError(f"Invalid classifier configuration {self}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise InvalidArgumentError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")


@dataclass(frozen=True)
class ClassifierReport:
    steps: int
    final_loss: float
    train_accuracy: float
    validation_accuracy: float | None
    n_train: int
    n_validation: int


class ExpressionClassifier(nn.Module):

    def __init__(self, num_expressions: int, image_size: Sequence[int] = (64, 64), channels: int = 3,
                 feature_dim: int = 128):
        super().__init__()
        scale = 2 ** len(STAGES)
        if any(int(s) % scale for s in image_size):
            raise InvalidArgumentError(f"Classifier input size {tuple(image_size)} must be divisible by {scale}")
        self.num_expressions = int(num_expressions)
        self.image_size = (int(image_size[0]), int(image_size[1]))
        self.channels = int(channels)
        self.feature_dim = int(feature_dim)
        self.report: ClassifierReport | None = None

        stages = []
        in_channels = self.channels
        for widths in STAGES:
            convs = []
            for width in widths:
                convs.append(nn.Conv2d(in_channels, width, 3, padding=1))
                in_channels = width
            stages.append(nn.ModuleList(convs))
        self.stages = nn.ModuleList(stages)
        pooled = in_channels * (self.image_size[0] // scale) * (self.image_size[1] // scale)
        self.embedding = nn.Linear(pooled, self.feature_dim)
        self.head = nn.Linear(self.feature_dim, self.num_expressions)

    @property
    def layer_ids(self) -> list[tuple[int, int]]:
        return [(i + 1, j + 1) for i, widths in enumerate(STAGES) for j in range(len(widths))]

    def features(self, images: torch.Tensor, stop_at: tuple[int, int] | None = None) -> dict[tuple[int, int],
                                                                                                torch.Tensor]:
        """
        Post-activation, pre-pooling output of every convolution, optionally stopping after `stop_at`
        """
        captured = {}
        out = images
        for i, stage in enumerate(self.stages):
            for j, conv in enumerate(stage):
                out = torch.relu(conv(out))
                captured[(i + 1, j + 1)] = out
                if stop_at == (i + 1, j + 1):
                    return captured
            out = F.max_pool2d(out, 2)
        captured[(0, 0)] = out
        return captured

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        pooled = self.features(images)[(0, 0)]
        return torch.relu(self.embedding(pooled.flatten(1)))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed(images))


def __as_batch__(model: ExpressionClassifier, images: torch.Tensor | np.ndarray | list[np.ndarray]) -> torch.Tensor:
    batch = images if isinstance(images, torch.Tensor) else to_tensor(images)
    if batch.ndim == 3:
        batch = batch[None]
    expected = (model.channels, *model.image_size)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != expected:
        raise InvalidArgumentError(f"Classifier expects N×{'×'.join(map(str, expected))} images, "
                                   f"got {tuple(batch.shape)}")
    return batch


def classify(model: ExpressionClassifier, images: torch.Tensor | np.ndarray | list[np.ndarray]) -> torch.Tensor:
    """
    Class posterior, `N×K`, each row summing to 1
    """
    batch = __as_batch__(model, images)
    return torch.softmax(model(batch), dim=1)


def embed(model: ExpressionClassifier, images: torch.Tensor | np.ndarray | list[np.ndarray]) -> torch.Tensor:
    return model.embed(__as_batch__(model, images))


def extract_features(model: ExpressionClassifier, images: torch.Tensor | np.ndarray | list[np.ndarray],
                     layer_id: tuple[int, int] = DEFAULT_LAYER) -> FeatureMap:
    """
    Activations of convolution `layer_id`, after the rectifier and before the stage's pooling

    :raises InvalidArgumentError: Unknown layer id
    """
    layer_id = (int(layer_id[0]), int(layer_id[1]))
    if layer_id not in model.layer_ids:
        raise InvalidArgumentError(f"Unknown layer {layer_id}, valid layers are {model.layer_ids}")
    return FeatureMap(model.features(__as_batch__(model, images), stop_at=layer_id)[layer_id], layer_id)


def classification_loss(model: ExpressionClassifier, images: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(model(images), targets)


@torch.no_grad()
def predict(model: ExpressionClassifier, images: torch.Tensor | np.ndarray | list[np.ndarray]) -> torch.Tensor:
    """
    Class probabilities in chunks, without building a graph
    """
    batch = __as_batch__(model, images)
    return torch.cat([classify(model, batch[i:i + INFERENCE_CHUNK]) for i in range(0, len(batch), INFERENCE_CHUNK)])


def accuracy(model: ExpressionClassifier, images: torch.Tensor | np.ndarray | list[np.ndarray],
             labels: Sequence[ExpressionLabel | int]) -> float:
    if len(labels) == 0:
        raise InvalidArgumentError("Cannot compute accuracy of an empty set")
    targets = torch.tensor([__target__(label) for label in labels])
    return float((predict(model, images).argmax(dim=1) == targets).float().mean())


def __target__(label: ExpressionLabel | int) -> int:
    return label.index if isinstance(label, ExpressionLabel) else int(label)


def as_pairs(samples: Sequence[Sample | tuple[np.ndarray, ExpressionLabel]]) -> list[tuple[np.ndarray,
                                                                                          ExpressionLabel]]:
    return [(s.image, s.label) if isinstance(s, Sample) else (s[0], s[1]) for s in samples]


def train_classifier(train: Sequence[Sample | tuple[np.ndarray, ExpressionLabel]], num_expressions: int,
                     config: ClassifierConfig | None = None, seed: int = 0) -> ExpressionClassifier:
    """
    Trains a classifier by minimising cross-entropy with Adam, deterministically from `seed`

    A `validation_fraction` of the data is held out and the final accuracies are attached as `model.report`.

    :param train: Samples or `(image, label)` pairs
    :param num_expressions: K
    :raises InvalidArgumentError: Fewer than two classes present, or a label outside [0, K)
    """
    config = config or ClassifierConfig()
    pairs = as_pairs(train)
    if not pairs:
        raise InvalidArgumentError("Cannot train a classifier without data")
    targets = np.array([__target__(label) for _, label in pairs])
    if targets.min() < 0 or targets.max() >= num_expressions:
        raise InvalidArgumentError(f"Labels must lie in [0, {num_expressions}), got {sorted(set(targets))}")
    if len(set(targets.tolist())) < 2:
        raise InvalidArgumentError("Training data holds a single expression class, at least two are needed")

    images = to_tensor([image for image, _ in pairs])
    labels = torch.from_numpy(targets).long()
    rng = np.random.default_rng(int(seed))
    order = rng.permutation(len(pairs))
    n_validation = int(round(len(pairs) * config.validation_fraction)) if len(pairs) >= 10 else 0
    validation = torch.as_tensor(order[:n_validation])
    training = torch.as_tensor(order[n_validation:])

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        model = ExpressionClassifier(num_expressions, images.shape[2:], images.shape[1], config.feature_dim)
    optimizer = ModuleAdam(model, config.learning_rate, config.beta1, config.beta2)

    loss = torch.tensor(float("nan"))
    for step in range(config.steps):
        picked = rng.choice(training.numpy(), size=min(config.batch_size, len(training)), replace=False)
        batch = torch.as_tensor(picked)
        loss = classification_loss(model, images[batch], labels[batch])
        params = optimizer.parameters()
        grads = torch.autograd.grad(loss, list(params.values()))
        optimizer.step(dict(zip(params.keys(), grads)))
        if (step + 1) % 100 == 0:
            logger.debug(f"Classifier step {step + 1}/{config.steps} loss {float(loss):.4f}")

    model.eval()
    model.report = ClassifierReport(
        steps=config.steps, final_loss=float(loss.detach()),
        train_accuracy=accuracy(model, images[training], labels[training].tolist()),
        validation_accuracy=accuracy(model, images[validation], labels[validation].tolist()) if n_validation else None,
        n_train=len(training), n_validation=n_validation,
    )
    logger.info(f"Trained classifier: {asdict(model.report)}")
    return model


def save_classifier(model: ExpressionClassifier, path: str | Path, expressions: Sequence[ExpressionLabel],
                    seed: int | None = None) -> Path:
    metadata = {
        "kind": "classifier", "seed": seed, "iteration": model.report.steps if model.report else 0,
        "K": model.num_expressions, "expressions": [e.name for e in expressions],
        "classifier": {"image_size": list(model.image_size), "channels": model.channels,
                       "feature_dim": model.feature_dim},
        "report": asdict(model.report) if model.report else None,
    }
    return save_checkpoint(path, {"classifier": model}, metadata)


def load_classifier(path: str | Path) -> tuple[ExpressionClassifier, tuple[ExpressionLabel, ...]]:
    """
    :raises CheckpointError: Missing file or a checkpoint of another kind
    """
    checkpoint = load_checkpoint(path)
    if checkpoint.kind != "classifier":
        raise CheckpointError(path, f"Expected a classifier checkpoint, got kind {checkpoint.kind}")
    shape = checkpoint.metadata["classifier"]
    model = ExpressionClassifier(checkpoint.metadata["K"], shape["image_size"], shape["channels"],
                                 shape["feature_dim"])
    checkpoint.restore("classifier", model)
    if checkpoint.metadata.get("report"):
        model.report = ClassifierReport(**checkpoint.metadata["report"])
    model.eval()
    return model, expression_catalogue(checkpoint.metadata["expressions"])
