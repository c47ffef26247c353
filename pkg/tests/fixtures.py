import os
import unittest
from typing import Any

import numpy as np
import torch

from facetrans_lib.classifier import ClassifierConfig
from facetrans_lib.faces_synth import DatasetSplit, generate_dataset
from facetrans_lib.nets import ArchConfig
from facetrans_lib.training import TrainConfig, TrainingBatch

SLOW_TESTS = os.environ.get("FACETRANS_SLOW_TESTS", "").strip().lower() in ("1", "true", "yes")
"""Full-scale runs only execute when FACETRANS_SLOW_TESTS=1"""

SMALL_SIZE = (32, 32)
QUICK_CLASSIFIER = ClassifierConfig(steps=5, batch_size=4, feature_dim=8)


def tiny_arch(num_expressions: int = 4, image_size: tuple[int, int] = (8, 8), **overrides: Any) -> ArchConfig:
    return ArchConfig(image_size=image_size, num_expressions=num_expressions, encoder_channels=(4, 8),
                      bottleneck_width=16, disc_channels=(8, 16), **overrides)


def small_split(n_identities: int = 8, seed: int = 3, **kwargs: Any) -> DatasetSplit:
    return generate_dataset(n_identities, size=SMALL_SIZE, seed=seed, test_fraction=0.25, **kwargs)


def small_config(**overrides: Any) -> TrainConfig:
    settings: dict[str, Any] = dict(seed=3, iterations=3, checkpoint_every=2, arch=tiny_arch(image_size=SMALL_SIZE),
                                    classifier=QUICK_CLASSIFIER)
    settings.update(overrides)
    return TrainConfig(**settings)


def toy_batch(arch: ArchConfig, seed: int = 0, batch_size: int = 4) -> TrainingBatch:
    """
    Random unpaired images with random non-neutral labels and random binary masks
    """
    g = torch.Generator().manual_seed(seed)
    shape = (batch_size, arch.channels, *arch.image_size)
    mask_shape = (batch_size, 1, *arch.image_size)
    return TrainingBatch(
        x=torch.rand(shape, generator=g) * 2 - 1,
        y=torch.rand(shape, generator=g) * 2 - 1,
        y_labels=[int(v) for v in torch.randint(1, arch.num_expressions, (batch_size,), generator=g)],
        x_masks=(torch.rand(mask_shape, generator=g) > 0.5).float(),
        y_masks=(torch.rand(mask_shape, generator=g) > 0.5).float(),
    )


class TensorVerifier(unittest.TestCase):

    def __assert_close__(self, actual: Any, expected: Any, tolerance: float = 1e-6, message: str = "") -> None:
        actual = actual.detach().cpu().numpy() if isinstance(actual, torch.Tensor) else np.asarray(actual)
        expected = expected.detach().cpu().numpy() if isinstance(expected, torch.Tensor) else np.asarray(expected)
        self.assertEqual(actual.shape, expected.shape, f"Shapes differ {message}")
        difference = float(np.max(np.abs(actual - expected))) if actual.size else 0.0
        self.assertLessEqual(difference, tolerance, f"Values differ by {difference} {message}")

    def __assert_binary__(self, mask: np.ndarray) -> None:
        self.assertEqual(mask.dtype, np.uint8)
        self.assertTrue(set(np.unique(mask).tolist()) <= {0, 1})
