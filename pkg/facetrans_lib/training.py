"""
Adversarial training of the two conditional generators and their discriminators

Each iteration updates both discriminators on detached fakes, then both generators on the weighted generator
objective evaluated against the freshly updated discriminators.  The X→Y generator receives the target expression's
attribute vector; the Y→X generator receives that vector with the target and neutral entries swapped, which is the
neutral attribute vector.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import torch
from torch import nn

from facetrans_lib.checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from facetrans_lib.classifier import (
    DEFAULT_LAYER,
    ClassifierConfig,
    ExpressionClassifier,
    extract_features,
    save_classifier,
    train_classifier,
)
from facetrans_lib.exceptions import CheckpointError, InvalidArgumentError, NumericalInstabilityError
from facetrans_lib.faces_synth import DatasetSplit, ExpressionLabel, Sample, expression_catalogue, find_expression
from facetrans_lib.images import masks_to_tensor, to_numpy, to_tensor
from facetrans_lib.losses import (
    LossBreakdown,
    LossWeights,
    bidirectional_mask_loss,
    content_loss,
    cycle_loss,
    identity_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    require_finite,
    total_loss,
)
from facetrans_lib.mask import landmarks_to_mask
from facetrans_lib.nets import (
    ArchConfig,
    Generator,
    Networks,
    encode_attribute,
    encode_attributes,
    generator_forward,
    init_params,
    swap_attribute,
)
from facetrans_lib.optim import DEFAULT_EPS, ModuleAdam
from facetrans_lib.sinks import JsonLinesSink

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

CONDITION_MODES = ("bottleneck", "none")
MASK_SOURCES = ("analytic", "landmarks")
METRICS_FORMAT = "facetrans-metrics"
METRICS_FILE = "metrics.jsonl"
CLASSIFIER_FILE = "classifier.npz"
CHECKPOINT_DIR = "checkpoints"

DEVIATION_NOTICES = (
    "Perceptual features and scores come from a small task-trained expression classifier, not a pretrained VGG",
    "The content loss compares features of each generator's input with features of its output",
    "Every L1 and L2 term is a mean over elements, the content loss also averages over channels",
    "Training length is an iteration budget rather than a number of epochs",
    "Discriminators train on the current fakes only, there is no image history buffer",
    "Loss weights are constant for the whole run",
)


class Direction(Enum):
    X_TO_Y = "x-to-y"
    Y_TO_X = "y-to-x"


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = DEFAULT_EPS
    batch_size: int = 1
    iterations: int = 2000
    weights: LossWeights = field(default_factory=LossWeights)
    condition_mode: str = "bottleneck"
    lr_decay: bool = True
    checkpoint_every: int = 500
    mask_source: str = "analytic"
    mask_radius: float | None = None
    background_weight: float = 0.0
    content_layer: tuple[int, int] = DEFAULT_LAYER
    arch: ArchConfig | None = None
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidArgumentError(f"beta1 and beta2 must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.batch_size < 1 or self.iterations < 0 or self.checkpoint_every < 1:
            raise InvalidArgumentError("batch_size and checkpoint_every must be >= 1 and iterations >= 0")
        if self.condition_mode not in CONDITION_MODES:
            raise InvalidArgumentError(f"condition_mode must be one of {', '.join(CONDITION_MODES)}")
        if self.mask_source not in MASK_SOURCES:
            raise InvalidArgumentError(f"mask_source must be one of {', '.join(MASK_SOURCES)}")
        if not 0.0 <= self.background_weight < 1.0:
            raise InvalidArgumentError(f"background_weight must lie in [0, 1), got {self.background_weight}")
        object.__setattr__(self, "content_layer", (int(self.content_layer[0]), int(self.content_layer[1])))

    def to_json(self) -> dict[str, Any]:
        payload = {k: v for k, v in asdict(self).items() if k not in ("arch", "weights", "classifier")}
        payload["content_layer"] = list(self.content_layer)
        payload["weights"] = self.weights.to_json()
        payload["arch"] = self.arch.to_json() if self.arch else None
        payload["classifier"] = asdict(self.classifier)
        return payload


@dataclass
class ModelState:
    """
    Networks, optimizer moments and the batch sampler of a run, updated in place by `train_step()`
    """
    networks: Networks
    g_optimizer: ModuleAdam
    d_optimizer: ModuleAdam
    rng: np.random.Generator
    iteration: int = 0


@dataclass(frozen=True)
class MetricRecord:
    iteration: int
    generator: LossBreakdown
    discriminator: dict[str, float]
    grad_norms: dict[str, float]
    learning_rate: float
    seconds: float

    def to_json(self) -> dict[str, Any]:
        return {"type": "metric", "iteration": self.iteration, "generator": self.generator.to_json(),
                "discriminator": dict(self.discriminator), "grad_norms": dict(self.grad_norms),
                "learning_rate": self.learning_rate, "seconds": self.seconds}


class MetricLog:
    """
    The metric log of a training run, a header line followed by one line per iteration
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.sink = JsonLinesSink(self.path)

    def header(self, config: TrainConfig, notices: Sequence[str] = DEVIATION_NOTICES, **details: Any) -> None:
        """
        Writes the header line, which carries the full configuration and the deviation notices of the run
        """
        if self.sink.count:
            raise RuntimeError(f"Metric log {self.path} already has a header")
        self.sink.send({"type": "header", "format": METRICS_FORMAT, "version": 1, "config": config.to_json(),
                        "notices": list(notices), **details})

    def append(self, record: MetricRecord) -> None:
        if not self.sink.count:
            raise RuntimeError(f"Metric log {self.path} has no header")
        self.sink.send(record.to_json())

    def close(self) -> None:
        self.sink.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


@dataclass(frozen=True)
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    classifier_path: Path | None
    iterations: int
    checkpoints: tuple[Path, ...] = ()


@dataclass(frozen=True)
class TrainingBatch:
    x: torch.Tensor
    y: torch.Tensor
    y_labels: list[int]
    x_masks: torch.Tensor | None = None
    y_masks: torch.Tensor | None = None


def initial_state(config: TrainConfig, arch: ArchConfig) -> ModelState:
    networks = init_params(arch, config.seed)
    generators = nn.ModuleDict(networks.generators())
    discriminators = nn.ModuleDict(networks.discriminators())
    return ModelState(
        networks=networks,
        g_optimizer=ModuleAdam(generators, config.learning_rate, config.beta1, config.beta2, config.eps),
        d_optimizer=ModuleAdam(discriminators, config.learning_rate, config.beta1, config.beta2, config.eps),
        rng=np.random.default_rng([int(config.seed), 1]),
    )


def scheduled_learning_rate(config: TrainConfig, iteration: int) -> float:
    """
    Constant for the first half of training, then linear decay towards zero
    """
    if not config.lr_decay or config.iterations < 2:
        return config.learning_rate
    half = config.iterations // 2
    if iteration < half:
        return config.learning_rate
    return config.learning_rate * max(0.0, (config.iterations - iteration) / (config.iterations - half))


def __grad_norm__(grads: dict[str, torch.Tensor], network: str) -> float:
    total = sum(float(torch.sum(g.detach() ** 2)) for name, g in grads.items() if name.startswith(network + "."))
    return math.sqrt(total)


def __grads__(objective: torch.Tensor, optimizer: ModuleAdam) -> dict[str, torch.Tensor]:
    params = optimizer.parameters()
    grads = torch.autograd.grad(objective, list(params.values()), allow_unused=True)
    return {name: torch.zeros_like(p) if g is None else g for (name, p), g in zip(params.items(), grads)}


def train_step(state: ModelState, batch: TrainingBatch, config: TrainConfig,
               feature_extractor: ExpressionClassifier | None = None,
               learning_rate: float | None = None) -> tuple[ModelState, MetricRecord]:
    """
    One discriminator update followed by one generator update

    :param state: Model state, updated in place and returned
    :param batch: Unpaired X and Y images, the Y labels, and masks when the mask term is weighted
    :param config: Training configuration
    :param feature_extractor: Frozen classifier supplying content features, required when the content weight > 0
    :param learning_rate: Learning rate of this step, defaults to the configured one
    :raises NumericalInstabilityError: A loss or gradient is NaN or infinite
    """
    started = time.perf_counter()
    lr = config.learning_rate if learning_rate is None else learning_rate
    weights = config.weights
    nets = state.networks
    k = nets.arch.num_expressions
    if batch.x.shape[0] != batch.y.shape[0] or len(batch.y_labels) != batch.y.shape[0]:
        raise InvalidArgumentError("X images, Y images and Y labels must have one batch size")
    if weights.mask > 0 and (batch.x_masks is None or batch.y_masks is None):
        raise InvalidArgumentError("Masks are required when the mask loss weight is positive")
    if weights.content > 0 and feature_extractor is None:
        raise InvalidArgumentError("A feature extractor is required when the content loss weight is positive")

    target = encode_attributes(batch.y_labels, k)
    neutral = torch.stack([z if i == 0 else swap_attribute(z, i, 0) for z, i in zip(target, batch.y_labels)])
    if config.condition_mode == "none":
        # Neither side of an unconditioned model sees the label
        target, neutral = torch.zeros_like(target), torch.zeros_like(neutral)

    fake_y = nets.g_xy(batch.x, target)
    fake_x = nets.g_yx(batch.y, neutral)

    d_x_loss = lsgan_d_loss(nets.d_x(batch.x, neutral), nets.d_x(fake_x.detach(), neutral))
    d_y_loss = lsgan_d_loss(nets.d_y(batch.y, target), nets.d_y(fake_y.detach(), target))
    d_total = d_x_loss + d_y_loss
    discriminator = {"d_x": require_finite("d_x", d_x_loss), "d_y": require_finite("d_y", d_y_loss),
                     "total": require_finite("discriminator", d_total)}
    d_grads = __grads__(d_total, state.d_optimizer)
    state.d_optimizer.step(d_grads, lr)

    adversarial = lsgan_g_loss(nets.d_y(fake_y, target)) + lsgan_g_loss(nets.d_x(fake_x, neutral))
    x_rec = nets.g_yx(fake_y, neutral)
    y_rec = nets.g_xy(fake_x, target)
    cycle = cycle_loss(batch.x, x_rec, batch.y, y_rec)

    zero = batch.x.new_zeros(())
    identity = zero
    if weights.identity > 0:
        identity = identity_loss(nets.g_yx(batch.x, neutral), batch.x, nets.g_xy(batch.y, target), batch.y)

    content = zero
    if weights.content > 0:
        layer = config.content_layer
        content = (content_loss(extract_features(feature_extractor, batch.x, layer),
                                extract_features(feature_extractor, fake_y, layer))
                   + content_loss(extract_features(feature_extractor, batch.y, layer),
                                  extract_features(feature_extractor, fake_x, layer)))

    masked = zero
    if weights.mask > 0:
        masked = bidirectional_mask_loss(batch.x, batch.x_masks, lambda t: nets.g_yx(nets.g_xy(t, target), neutral),
                                         batch.y, batch.y_masks, lambda t: nets.g_xy(nets.g_yx(t, neutral), target),
                                         config.background_weight)

    breakdown = total_loss(adversarial, cycle, content, identity, masked, weights, adversarial_d=d_total.detach())
    g_grads = __grads__(breakdown.objective, state.g_optimizer)
    state.g_optimizer.step(g_grads, lr)

    state.iteration += 1
    record = MetricRecord(
        iteration=state.iteration,
        generator=breakdown,
        discriminator=discriminator,
        grad_norms={**{name: __grad_norm__(g_grads, name) for name in ("g_xy", "g_yx")},
                    **{name: __grad_norm__(d_grads, name) for name in ("d_x", "d_y")}},
        learning_rate=float(lr),
        seconds=time.perf_counter() - started,
    )
    return state, record


class __BatchSampler__:
    """
    Holds a split's training tensors and draws unpaired batches from a run's generator
    """

    def __init__(self, data: DatasetSplit, config: TrainConfig):
        self.x = to_tensor([s.image for s in data.domain_x])
        self.y = to_tensor([s.image for s in data.domain_y])
        self.y_labels = [s.label.index for s in data.domain_y]
        self.x_masks = self.y_masks = None
        if config.weights.mask > 0:
            self.x_masks = masks_to_tensor(self.__masks__(data.domain_x, config))
            self.y_masks = masks_to_tensor(self.__masks__(data.domain_y, config))

    @staticmethod
    def __masks__(samples: Sequence[Sample], config: TrainConfig) -> list[np.ndarray]:
        masks = []
        for s in samples:
            if config.mask_source == "landmarks":
                masks.append(landmarks_to_mask(s.landmarks, s.image.shape[:2], config.mask_radius))
            elif s.mask is None:
                raise InvalidArgumentError(f"Sample {s.key} has no mask; fill masks from landmarks or use the "
                                           f"landmarks mask source")
            else:
                masks.append(s.mask)
        return masks

    def draw(self, rng: np.random.Generator, batch_size: int) -> TrainingBatch:
        i = torch.as_tensor(rng.integers(0, len(self.x), size=batch_size))
        j = torch.as_tensor(rng.integers(0, len(self.y), size=batch_size))
        return TrainingBatch(
            x=self.x[i], y=self.y[j], y_labels=[self.y_labels[int(v)] for v in j],
            x_masks=self.x_masks[i] if self.x_masks is not None else None,
            y_masks=self.y_masks[j] if self.y_masks is not None else None,
        )


def resolve_arch(config: TrainConfig, data: DatasetSplit) -> ArchConfig:
    arch = config.arch or ArchConfig(image_size=data.size, num_expressions=data.num_expressions)
    if arch.num_expressions != data.num_expressions or tuple(arch.image_size) != tuple(data.size):
        raise InvalidArgumentError(f"Architecture for K={arch.num_expressions} at {arch.image_size} does not match "
                                   f"data with K={data.num_expressions} at {data.size}")
    return arch


def checkpoint_metadata(state: ModelState, config: TrainConfig, expressions: Sequence[ExpressionLabel]
                        ) -> dict[str, Any]:
    return {
        "kind": "translation", "arch": state.networks.arch.to_json(), "expressions": [e.name for e in expressions],
        "K": len(expressions), "seed": config.seed, "iteration": state.iteration,
        "condition_mode": config.condition_mode, "rng_state": state.rng.bit_generator.state,
        "config": config.to_json(),
    }


def save_state(path: Path, state: ModelState, config: TrainConfig, expressions: Sequence[ExpressionLabel]) -> Path:
    return save_checkpoint(path, dict(state.networks.items()), checkpoint_metadata(state, config, expressions),
                           {"generators": state.g_optimizer, "discriminators": state.d_optimizer})


def train(config: TrainConfig, data: DatasetSplit, out_dir: str | Path,
          feature_extractor: ExpressionClassifier | None = None,
          progress: Callable[[MetricRecord], None] | None = None) -> TrainResult:
    """
    Runs `config.iterations` training steps, writing checkpoints and the metric log under `out_dir`

    `out_dir` receives `metrics.jsonl` (a header line followed by one line per iteration), `checkpoints/` with the
    initial, periodic and final checkpoints, and `classifier.npz` when a feature extractor had to be trained.

    :param feature_extractor: Classifier for the content loss, trained on the split's training samples if absent
    :param progress: Called with every metric record
    :raises NumericalInstabilityError: With `checkpoint_path` naming the last good checkpoint
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arch = resolve_arch(config, data)

    classifier_path = None
    if feature_extractor is None and config.weights.content > 0:
        feature_extractor = train_classifier(data.train_samples(), data.num_expressions, config.classifier,
                                             config.seed)
        classifier_path = save_classifier(feature_extractor, out / CLASSIFIER_FILE, data.expressions, config.seed)
    if feature_extractor is not None:
        feature_extractor.eval()
        feature_extractor.requires_grad_(False)

    sampler = __BatchSampler__(data, config)
    state = initial_state(config, arch)
    checkpoint_dir = out / CHECKPOINT_DIR
    saved = [save_state(checkpoint_dir / f"ckpt_{0:06d}.npz", state, config, data.expressions)]

    metrics_path = out / METRICS_FILE
    with MetricLog(metrics_path) as log:
        log.header(config, expressions=[e.name for e in data.expressions],
                   dataset={"N": data.n, "M": data.m, "size": list(data.size)})
        for i in range(config.iterations):
            batch = sampler.draw(state.rng, config.batch_size)
            try:
                state, record = train_step(state, batch, config, feature_extractor,
                                           scheduled_learning_rate(config, i))
            except NumericalInstabilityError as e:
                logger.error(f"Numerical instability at iteration {i + 1} in {e.term}, last good checkpoint "
                             f"{saved[-1]}")
                raise e.with_checkpoint(str(saved[-1]))
            log.append(record)
            if progress is not None:
                progress(record)
            if state.iteration % config.checkpoint_every == 0:
                saved.append(save_state(checkpoint_dir / f"ckpt_{state.iteration:06d}.npz", state, config,
                                        data.expressions))
    if state.iteration > 0 and state.iteration % config.checkpoint_every != 0:
        saved.append(save_state(checkpoint_dir / f"ckpt_{state.iteration:06d}.npz", state, config, data.expressions))

    logger.info(f"Training finished after {state.iteration} iterations, final checkpoint {saved[-1]}")
    return TrainResult(checkpoint_path=saved[-1], metrics_path=metrics_path, classifier_path=classifier_path,
                       iterations=state.iteration, checkpoints=tuple(saved))


@dataclass
class TranslationModel:
    g_xy: Generator
    g_yx: Generator
    arch: ArchConfig
    expressions: tuple[ExpressionLabel, ...]
    condition_mode: str
    iteration: int
    path: Path | None = None


def load_translation_model(checkpoint: str | Path | Checkpoint) -> TranslationModel:
    """
    :raises CheckpointError: Missing file or a checkpoint of another kind
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    if checkpoint.kind != "translation":
        raise CheckpointError(checkpoint.path, f"Expected a translation checkpoint, got kind {checkpoint.kind}")
    arch = ArchConfig.from_json(checkpoint.metadata["arch"])
    model = TranslationModel(
        g_xy=checkpoint.restore("g_xy", Generator(arch)).eval(),
        g_yx=checkpoint.restore("g_yx", Generator(arch)).eval(),
        arch=arch, expressions=expression_catalogue(checkpoint.metadata["expressions"]),
        condition_mode=checkpoint.metadata.get("condition_mode", "bottleneck"),
        iteration=checkpoint.iteration, path=checkpoint.path,
    )
    return model


@torch.no_grad()
def translate(checkpoint: str | Path | Checkpoint | TranslationModel, image: np.ndarray | list[np.ndarray],
              target: ExpressionLabel | str | int, direction: Direction | None = None) -> np.ndarray:
    """
    Translates one `H×W×C` image (or a list of them) with a single generator pass

    :param target: Target expression.  Neutral selects the Y→X generator, any other expression the X→Y generator.
    :param direction: Explicit direction, Y→X only accepts the neutral target
    :raises InvalidArgumentError: Target not among the checkpoint's expressions, or inconsistent direction
    """
    model = checkpoint if isinstance(checkpoint, TranslationModel) else load_translation_model(checkpoint)
    name_or_index = target.name if isinstance(target, ExpressionLabel) else target
    label = find_expression(model.expressions, name_or_index)
    if isinstance(target, ExpressionLabel) and target.index != label.index:
        raise InvalidArgumentError(f"Expression {target.name} has index {label.index} in this checkpoint, "
                                   f"got {target.index}")
    if direction is None:
        direction = Direction.Y_TO_X if label.index == 0 else Direction.X_TO_Y
    if direction is Direction.Y_TO_X and label.index != 0:
        raise InvalidArgumentError(f"The Y→X generator only produces neutral faces, got target {label.name}")
    if direction is Direction.X_TO_Y and label.index == 0:
        raise InvalidArgumentError("The X→Y generator needs a non-neutral target expression")

    batch = to_tensor(image if isinstance(image, list) else [image])
    generator = model.g_xy if direction is Direction.X_TO_Y else model.g_yx
    z = None if model.condition_mode == "none" else encode_attribute(label, model.arch.num_expressions)[None]
    out = to_numpy(generator_forward(generator, batch, z))
    return out if isinstance(image, list) else out[0]

