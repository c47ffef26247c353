import json
import tempfile
import time
import unittest
from dataclasses import replace
from pathlib import Path
from typing import Any
from unittest import mock

import numpy as np
import torch
import torch.nn.functional as F

from facetrans_lib.checkpoints import load_checkpoint
from facetrans_lib.classifier import ExpressionClassifier, embed, load_classifier, train_classifier
from facetrans_lib.evaluation import (
    augmentation_experiment, conditioning_effect, generate_translations, shuffled_silhouette, silhouette,
)
from facetrans_lib.exceptions import InvalidArgumentError, NumericalInstabilityError
from facetrans_lib.faces_synth import generate_dataset, load_dataset, save_dataset
from facetrans_lib.losses import LossBreakdown, LossWeights
from facetrans_lib.nets import init_params, parameter_digest
from facetrans_lib.sources import JsonLinesSource
from facetrans_lib.training import (
    CHECKPOINT_DIR, CLASSIFIER_FILE, METRICS_FILE, Direction, MetricLog, MetricRecord, TrainConfig, TrainResult,
    initial_state, load_translation_model, scheduled_learning_rate, train, train_step, translate,
)
from tests.fixtures import SLOW_TESTS, TensorVerifier, small_config, small_split, tiny_arch, toy_batch


def manual_adam(value: torch.Tensor, grad: torch.Tensor, lr: float, beta1: float, beta2: float,
                eps: float) -> torch.Tensor:
    m_hat = ((1 - beta1) * grad) / (1 - beta1)
    v_hat = ((1 - beta2) * grad * grad) / (1 - beta2)
    return value - lr * m_hat / (torch.sqrt(v_hat) + eps)


def content_features(extractor: ExpressionClassifier, images: torch.Tensor) -> torch.Tensor:
    out = torch.relu(extractor.stages[0][0](images))
    out = F.max_pool2d(out, 2)
    out = torch.relu(extractor.stages[1][0](out))
    return torch.relu(extractor.stages[1][1](out))


class TestTrainStep(TensorVerifier):

    def __assert_update__(self, actual: torch.Tensor, expected: torch.Tensor, before: torch.Tensor,
                          grad: torch.Tensor, lr: float, name: str) -> None:
        # Blocks whose gradient vanishes analytically, e.g. biases ahead of instance normalisation, only move by
        # rounding noise, bounded by the learning rate
        significant = grad.abs() > 1e-5
        self.__assert_close__(actual[significant], expected[significant], 1e-6, name)
        drift = (actual[~significant] - before[~significant]).abs()
        self.assertLessEqual(float(drift.max()) if drift.numel() else 0.0, lr * (1 + 1e-6), name)

    def test_single_step_oracle_01(self) -> None:
        arch = tiny_arch()
        config = TrainConfig(seed=3, arch=arch)
        batch = toy_batch(arch, seed=1)
        torch.manual_seed(0)
        extractor = ExpressionClassifier(arch.num_expressions, arch.image_size, feature_dim=8).eval()
        extractor.requires_grad_(False)

        state = initial_state(config, arch)
        oracle = init_params(arch, config.seed)
        before = {f"{name}.{p}": v.detach().clone() for name, module in oracle.items()
                  for p, v in module.named_parameters()}
        state, record = train_step(state, batch, config, extractor)

        lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.eps
        z = F.one_hot(torch.tensor(batch.y_labels), arch.num_expressions).float()
        n = F.one_hot(torch.zeros(len(batch.y_labels), dtype=torch.long), arch.num_expressions).float()
        x, y, m_x, m_y = batch.x, batch.y, batch.x_masks, batch.y_masks

        # Discriminators
        fake_y = oracle.g_xy(x, z).detach()
        fake_x = oracle.g_yx(y, n).detach()
        d_x_loss = torch.mean((oracle.d_x(x) - 1) ** 2) + torch.mean(oracle.d_x(fake_x) ** 2)
        d_y_loss = torch.mean((oracle.d_y(y) - 1) ** 2) + torch.mean(oracle.d_y(fake_y) ** 2)
        d_params = [(f"{name}.{p}", v) for name in ("d_x", "d_y")
                    for p, v in getattr(oracle, name).named_parameters()]
        d_grads = torch.autograd.grad(d_x_loss + d_y_loss, [v for _, v in d_params])
        with torch.no_grad():
            for (name, value), grad in zip(d_params, d_grads):
                value.copy_(manual_adam(value, grad, lr, b1, b2, eps))

        # Generators
        fake_y = oracle.g_xy(x, z)
        fake_x = oracle.g_yx(y, n)
        adversarial = torch.mean((oracle.d_y(fake_y) - 1) ** 2) + torch.mean((oracle.d_x(fake_x) - 1) ** 2)
        cycle = (torch.mean(torch.abs(oracle.g_yx(fake_y, n) - x))
                 + torch.mean(torch.abs(oracle.g_xy(fake_x, z) - y)))
        identity = torch.mean(torch.abs(oracle.g_yx(x, n) - x)) + torch.mean(torch.abs(oracle.g_xy(y, z) - y))
        content = (torch.mean((content_features(extractor, x) - content_features(extractor, fake_y)) ** 2)
                   + torch.mean((content_features(extractor, y) - content_features(extractor, fake_x)) ** 2))
        masked_x, masked_y = x * m_x, y * m_y
        mask = (torch.mean(torch.abs(oracle.g_yx(oracle.g_xy(masked_x, z), n) - masked_x))
                + torch.mean(torch.abs(oracle.g_xy(oracle.g_yx(masked_y, n), z) - masked_y)))
        total = adversarial + 10 * cycle + 1 * content + 5 * identity + 10 * mask
        g_params = [(f"{name}.{p}", v) for name in ("g_xy", "g_yx")
                    for p, v in getattr(oracle, name).named_parameters()]
        g_grads = torch.autograd.grad(total, [v for _, v in g_params])

        self.assertAlmostEqual(record.discriminator["total"], float(d_x_loss + d_y_loss), delta=1e-6)
        self.assertAlmostEqual(record.generator.adversarial_d, float(d_x_loss + d_y_loss), delta=1e-6)
        self.assertAlmostEqual(record.generator.adversarial_g, float(adversarial), delta=1e-6)
        self.assertAlmostEqual(record.generator.cycle, float(cycle), delta=1e-6)
        self.assertAlmostEqual(record.generator.identity, float(identity), delta=1e-6)
        self.assertAlmostEqual(record.generator.content, float(content), delta=1e-6)
        self.assertAlmostEqual(record.generator.mask, float(mask), delta=1e-6)
        self.assertAlmostEqual(record.generator.total, float(total), delta=1e-5)

        actual = {f"{name}.{p}": v.detach() for name, module in state.networks.items()
                  for p, v in module.named_parameters()}
        for (name, value), grad in zip(g_params, g_grads):
            expected = manual_adam(value.detach(), grad, lr, b1, b2, eps)
            self.__assert_update__(actual[name], expected, before[name], grad, lr, name)
        for (name, value), grad in zip(d_params, d_grads):
            self.__assert_update__(actual[name], value.detach(), before[name], grad, lr, name)
        self.assertEqual(state.iteration, 1)
        self.assertEqual(state.g_optimizer.moments.step, 1)

    def test_zero_learning_rate_01(self) -> None:
        arch = tiny_arch()
        config = TrainConfig(seed=1, arch=arch, learning_rate=0.0, weights=LossWeights(content=0.0))
        state = initial_state(config, arch)
        digests = {name: parameter_digest(module) for name, module in state.networks.items()}
        state, record = train_step(state, toy_batch(arch), config)
        for name, module in state.networks.items():
            self.assertEqual(parameter_digest(module), digests[name], name)
        self.assertEqual(record.iteration, 1)
        self.assertEqual(record.learning_rate, 0.0)
        self.assertGreater(record.generator.total, 0.0)
        self.assertEqual(set(record.grad_norms), {"g_xy", "g_yx", "d_x", "d_y"})
        self.assertGreater(record.grad_norms["g_xy"], 0.0)

    def test_requirements_01(self) -> None:
        arch = tiny_arch()
        config = TrainConfig(seed=1, arch=arch)
        state = initial_state(config, arch)
        with self.assertRaisesRegex(InvalidArgumentError, "feature extractor"):
            train_step(state, toy_batch(arch), config)
        no_masks = replace(toy_batch(arch), x_masks=None)
        with self.assertRaisesRegex(InvalidArgumentError, "Masks"):
            train_step(state, no_masks, replace(config, weights=LossWeights(content=0.0)))
        short = replace(toy_batch(arch), y_labels=[1])
        with self.assertRaises(InvalidArgumentError):
            train_step(state, short, replace(config, weights=LossWeights(content=0.0)))

    def test_unconditioned_step_01(self) -> None:
        arch = tiny_arch()
        config = TrainConfig(seed=2, arch=arch, condition_mode="none", weights=LossWeights(content=0.0))
        batch = toy_batch(arch)
        first = train_step(initial_state(config, arch), batch, config)[1]
        relabelled = replace(batch, y_labels=[(label % 3) + 1 for label in batch.y_labels])
        second = train_step(initial_state(config, arch), relabelled, config)[1]
        # Generators never see the labels, so the losses do not depend on them
        self.assertEqual(first.generator.to_json(), second.generator.to_json())

    def test_unconditioned_step_02(self) -> None:
        arch = tiny_arch(disc_condition="tiled-concat")
        config = TrainConfig(seed=2, arch=arch, condition_mode="none", weights=LossWeights(content=0.0))
        batch = toy_batch(arch)
        first_state, first = train_step(initial_state(config, arch), batch, config)
        relabelled = replace(batch, y_labels=[(label % 3) + 1 for label in batch.y_labels])
        second_state, second = train_step(initial_state(config, arch), relabelled, config)
        # Tiled discriminators of an unconditioned model see an all-zero block
        self.assertEqual(first.generator.to_json(), second.generator.to_json())
        self.assertEqual(first.discriminator, second.discriminator)
        for name, module in first_state.networks.items():
            self.assertEqual(parameter_digest(module), parameter_digest(getattr(second_state.networks, name)), name)

    def test_cycle_gan_reduction_01(self) -> None:
        # No labels, no content term and no mask term leaves the plain cycle-consistent objective
        for disc_condition in ("none", "tiled-concat"):
            with self.subTest(disc_condition=disc_condition):
                arch = tiny_arch(disc_condition=disc_condition)
                config = TrainConfig(seed=5, arch=arch, condition_mode="none",
                                     weights=LossWeights(content=0.0, mask=0.0))
                batch = replace(toy_batch(arch, seed=2), x_masks=None, y_masks=None)

                state = initial_state(config, arch)
                oracle = init_params(arch, config.seed)
                before = {f"{name}.{p}": v.detach().clone() for name, module in oracle.items()
                          for p, v in module.named_parameters()}
                state, record = train_step(state, batch, config)

                lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.eps
                x, y = batch.x, batch.y
                blank = torch.zeros(x.shape[0], arch.num_expressions)

                def d(net: torch.nn.Module, images: torch.Tensor) -> torch.Tensor:
                    return net(images, blank) if disc_condition == "tiled-concat" else net(images)

                fake_y = oracle.g_xy(x, blank).detach()
                fake_x = oracle.g_yx(y, blank).detach()
                d_loss = (torch.mean((d(oracle.d_x, x) - 1) ** 2) + torch.mean(d(oracle.d_x, fake_x) ** 2)
                          + torch.mean((d(oracle.d_y, y) - 1) ** 2) + torch.mean(d(oracle.d_y, fake_y) ** 2))
                d_params = [(f"{name}.{p}", v) for name in ("d_x", "d_y")
                            for p, v in getattr(oracle, name).named_parameters()]
                d_grads = torch.autograd.grad(d_loss, [v for _, v in d_params])
                with torch.no_grad():
                    for (name, value), grad in zip(d_params, d_grads):
                        value.copy_(manual_adam(value, grad, lr, b1, b2, eps))

                fake_y = oracle.g_xy(x, blank)
                fake_x = oracle.g_yx(y, blank)
                adversarial = (torch.mean((d(oracle.d_y, fake_y) - 1) ** 2)
                               + torch.mean((d(oracle.d_x, fake_x) - 1) ** 2))
                cycle = (torch.mean(torch.abs(oracle.g_yx(fake_y, blank) - x))
                         + torch.mean(torch.abs(oracle.g_xy(fake_x, blank) - y)))
                identity = (torch.mean(torch.abs(oracle.g_yx(x, blank) - x))
                            + torch.mean(torch.abs(oracle.g_xy(y, blank) - y)))
                total = adversarial + 10 * cycle + 5 * identity
                g_params = [(f"{name}.{p}", v) for name in ("g_xy", "g_yx")
                            for p, v in getattr(oracle, name).named_parameters()]
                g_grads = torch.autograd.grad(total, [v for _, v in g_params])

                self.assertAlmostEqual(record.discriminator["total"], float(d_loss), delta=1e-6)
                self.assertAlmostEqual(record.generator.adversarial_g, float(adversarial), delta=1e-6)
                self.assertAlmostEqual(record.generator.cycle, float(cycle), delta=1e-6)
                self.assertAlmostEqual(record.generator.identity, float(identity), delta=1e-6)
                self.assertEqual(record.generator.content, 0.0)
                self.assertEqual(record.generator.mask, 0.0)
                self.assertAlmostEqual(record.generator.total, float(total), delta=1e-5)

                actual = {f"{name}.{p}": v.detach() for name, module in state.networks.items()
                          for p, v in module.named_parameters()}
                for (name, value), grad in zip(g_params, g_grads):
                    expected = manual_adam(value.detach(), grad, lr, b1, b2, eps)
                    self.__assert_update__(actual[name], expected, before[name], grad, lr, name)
                for (name, value), grad in zip(d_params, d_grads):
                    self.__assert_update__(actual[name], value.detach(), before[name], grad, lr, name)


class TestSchedule(unittest.TestCase):

    def test_schedule_01(self) -> None:
        config = TrainConfig(seed=0, learning_rate=1.0, iterations=10)
        self.assertEqual([scheduled_learning_rate(config, i) for i in (0, 4, 5)], [1.0, 1.0, 1.0])
        self.assertAlmostEqual(scheduled_learning_rate(config, 9), 0.2)
        constant = replace(config, lr_decay=False)
        self.assertEqual(scheduled_learning_rate(constant, 9), 1.0)

    def test_bad_config_01(self) -> None:
        with self.assertRaises(InvalidArgumentError):
            TrainConfig(seed=0, learning_rate=-1.0)
        with self.assertRaises(InvalidArgumentError):
            TrainConfig(seed=0, condition_mode="concat")
        with self.assertRaises(InvalidArgumentError):
            TrainConfig(seed=0, mask_source="segmentation")
        with self.assertRaises(InvalidArgumentError):
            TrainConfig(seed=0, background_weight=1.0)
        with self.assertRaises(InvalidArgumentError):
            TrainConfig(seed=0, batch_size=0)


class TestTrain(TensorVerifier):

    @staticmethod
    def __records__(path: Path) -> list[dict]:
        with JsonLinesSource(path) as source:
            return list(source.data())

    def test_train_01(self) -> None:
        split = small_split()
        seen = []
        with tempfile.TemporaryDirectory() as tmp:
            result = train(small_config(), split, tmp, progress=seen.append)
            records = self.__records__(result.metrics_path)
            self.assertEqual(result.metrics_path, Path(tmp) / METRICS_FILE)
            self.assertEqual(result.classifier_path, Path(tmp) / CLASSIFIER_FILE)
            self.assertTrue(result.classifier_path.is_file())
            self.assertEqual([p.name for p in result.checkpoints],
                             ["ckpt_000000.npz", "ckpt_000002.npz", "ckpt_000003.npz"])
            self.assertTrue(all(p.parent == Path(tmp) / CHECKPOINT_DIR for p in result.checkpoints))
            checkpoint = load_checkpoint(result.checkpoint_path)
        self.assertEqual(result.iterations, 3)
        self.assertEqual(len(seen), 3)
        header, metrics = records[0], records[1:]
        self.assertEqual(header["type"], "header")
        self.assertEqual(header["config"]["weights"], {"cycle": 10.0, "content": 1.0, "identity": 5.0, "mask": 10.0})
        self.assertEqual(header["expressions"], ["neutral", "happy", "anger", "surprise"])
        self.assertTrue(header["notices"])
        self.assertEqual([r["iteration"] for r in metrics], [1, 2, 3])
        self.assertTrue(all(r["type"] == "metric" for r in metrics))
        self.assertEqual(checkpoint.iteration, 3)
        self.assertEqual(checkpoint.kind, "translation")
        self.assertEqual(checkpoint.metadata["K"], 4)
        self.assertIn("generators", checkpoint.moments)

    def test_deterministic_01(self) -> None:
        split = small_split()
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            a = self.__records__(train(small_config(), split, first).metrics_path)
            b = self.__records__(train(small_config(), split, second).metrics_path)
        for left, right in zip(a[1:], b[1:]):
            left.pop("seconds")
            right.pop("seconds")
            self.assertEqual(left, right)

    def test_zero_iterations_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            result = train(small_config(iterations=0, weights=LossWeights(content=0.0)), small_split(), tmp)
            records = self.__records__(result.metrics_path)
        self.assertEqual(len(result.checkpoints), 1)
        self.assertEqual(result.checkpoint_path.name, "ckpt_000000.npz")
        self.assertIsNone(result.classifier_path)
        self.assertEqual([r["type"] for r in records], ["header"])

    def test_metric_log_01(self) -> None:
        record = MetricRecord(1, LossBreakdown(0.5, 0.4, 1.0, 0.1, 0.0, 0.2, 12.5), {"total": 0.4},
                              {"g_xy": 1.0}, 2e-4, 0.01)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / METRICS_FILE
            with MetricLog(path) as log:
                with self.assertRaisesRegex(RuntimeError, "no header"):
                    log.append(record)
                log.header(small_config(), notices=["custom notice"], expressions=["neutral", "happy"])
                with self.assertRaisesRegex(RuntimeError, "already has a header"):
                    log.header(small_config())
                log.append(record)
            header, metric = self.__records__(path)
        self.assertEqual(header["notices"], ["custom notice"])
        self.assertEqual(header["expressions"], ["neutral", "happy"])
        self.assertEqual(header["config"]["seed"], 3)
        self.assertEqual(metric["generator"]["total"], 12.5)
        self.assertEqual(metric["grad_norms"], {"g_xy": 1.0})

    def test_landmark_masks_01(self) -> None:
        split = small_split()
        stripped = replace(split, domain_x=[replace(s, mask=None) for s in split.domain_x])
        config = small_config(iterations=1, weights=LossWeights(content=0.0))
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesRegex(InvalidArgumentError, "no mask"):
                train(config, stripped, tmp)
            result = train(replace(config, mask_source="landmarks"), stripped, tmp)
        self.assertEqual(result.iterations, 1)

    def test_mismatched_arch_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesRegex(InvalidArgumentError, "does not match"):
                train(small_config(arch=tiny_arch(num_expressions=5, image_size=(32, 32))), small_split(), tmp)

    def test_instability_01(self) -> None:
        config = small_config(weights=LossWeights(content=0.0))
        with tempfile.TemporaryDirectory() as tmp:
            with mock.patch("facetrans_lib.training.cycle_loss", return_value=torch.tensor(float("nan"))):
                with self.assertRaises(NumericalInstabilityError) as raised:
                    train(config, small_split(), tmp)
        self.assertEqual(raised.exception.term, "cycle")
        self.assertTrue(raised.exception.checkpoint_path.endswith("ckpt_000000.npz"))
        self.assertIn("ckpt_000000.npz", str(raised.exception))


class TestTranslate(TensorVerifier):

    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.TemporaryDirectory()
        cls.split = small_split()
        config = small_config(iterations=2, weights=LossWeights(content=0.0))
        cls.result = train(config, cls.split, cls.tmp.name)
        cls.unconditioned = train(replace(config, condition_mode="none"), cls.split, Path(cls.tmp.name) / "none")

    @classmethod
    def tearDownClass(cls) -> None:
        cls.tmp.cleanup()

    def test_translate_01(self) -> None:
        image = self.split.test_x[0].image
        out = translate(self.result.checkpoint_path, image, "happy")
        self.assertEqual(out.shape, image.shape)
        self.assertEqual(out.dtype, np.float32)
        self.assertLessEqual(float(np.abs(out).max()), 1.0)

    def test_translate_batch_01(self) -> None:
        model = load_translation_model(self.result.checkpoint_path)
        images = [s.image for s in self.split.test_x]
        batch = translate(model, images, "anger")
        self.assertEqual(batch.shape, (len(images), 32, 32, 3))
        np.testing.assert_allclose(batch[0], translate(model, images[0], "anger"), atol=1e-6)

    def test_translate_targets_01(self) -> None:
        model = load_translation_model(self.result.checkpoint_path)
        image = self.split.test_x[0].image
        outputs = [translate(model, image, name) for name in ("happy", "anger", "surprise")]
        self.assertFalse(np.array_equal(outputs[0], outputs[1]))
        neutralised = translate(model, self.split.test_y[0].image, "neutral")
        self.assertEqual(neutralised.shape, image.shape)

    def test_translate_unconditioned_01(self) -> None:
        model = load_translation_model(self.unconditioned.checkpoint_path)
        self.assertEqual(model.condition_mode, "none")
        image = self.split.test_x[0].image
        np.testing.assert_array_equal(translate(model, image, "happy"), translate(model, image, "surprise"))

    def test_bad_targets_01(self) -> None:
        model = load_translation_model(self.result.checkpoint_path)
        image = self.split.test_x[0].image
        with self.assertRaisesRegex(InvalidArgumentError, "valid expressions are neutral, happy, anger, surprise"):
            translate(model, image, "fear")
        with self.assertRaises(InvalidArgumentError):
            translate(model, image, "happy", Direction.Y_TO_X)
        with self.assertRaises(InvalidArgumentError):
            translate(model, image, "neutral", Direction.X_TO_Y)
        with self.assertRaises(InvalidArgumentError):
            translate(model, np.zeros((16, 16, 3), dtype=np.float32), "happy")


@unittest.skipUnless(SLOW_TESTS, "Set FACETRANS_SLOW_TESTS=1 to run the full-size training runs")
class TestDeskRun(TensorVerifier):
    """
    Full-size conditioned and unconditioned runs on the same saved 64x64 dataset with the same seed
    """

    @classmethod
    def __pipeline__(cls, root: Path) -> tuple[Path, TrainResult, float]:
        started = time.perf_counter()
        index = save_dataset(generate_dataset(375, seed=7), root / "data")
        result = train(TrainConfig(seed=7), load_dataset(index.parent), root / "conditioned")
        return index, result, time.perf_counter() - started

    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.TemporaryDirectory()
        root = Path(cls.tmp.name)
        cls.index, cls.conditioned, cls.seconds = cls.__pipeline__(root / "first")
        cls.split = load_dataset(cls.index.parent)
        cls.classifier, _ = load_classifier(cls.conditioned.classifier_path)
        cls.unconditioned = train(TrainConfig(seed=7, condition_mode="none"), cls.split, root / "unconditioned",
                                  feature_extractor=cls.classifier)

    @classmethod
    def tearDownClass(cls) -> None:
        cls.tmp.cleanup()

    def __assert_close_records__(self, left: Any, right: Any, path: str = "") -> None:
        if isinstance(left, dict):
            self.assertEqual(set(left), set(right), path)
            for key in left:
                self.__assert_close_records__(left[key], right[key], f"{path}.{key}")
        elif isinstance(left, float):
            self.assertAlmostEqual(left, right, delta=1e-6, msg=path)
        else:
            self.assertEqual(left, right, path)

    def test_desk_run_01(self) -> None:
        self.assertEqual(len(self.split.train_samples()), 600)
        self.assertEqual(self.split.size, (64, 64))
        self.assertEqual(self.conditioned.iterations, 2000)
        self.assertLess(self.seconds, 20 * 60)
        header = json.loads(self.conditioned.metrics_path.read_text().splitlines()[0])
        self.assertEqual(header["config"]["learning_rate"], 2e-4)
        self.assertGreaterEqual(conditioning_effect(self.conditioned.checkpoint_path, self.split.test_x,
                                                    self.classifier), 0.70)

    def test_determinism_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            index, repeat, _ = self.__pipeline__(Path(tmp))
            self.assertEqual(index.read_bytes(), self.index.read_bytes())
            a = TestTrain.__records__(self.conditioned.metrics_path)[1:]
            b = TestTrain.__records__(repeat.metrics_path)[1:]
        self.assertEqual(len(a), 2000)
        self.assertEqual(len(a), len(b))
        for left, right in zip(a, b):
            left.pop("seconds")
            right.pop("seconds")
            self.__assert_close_records__(left, right, f"iteration {left['iteration']}")

    def test_augmentation_01(self) -> None:
        model = load_translation_model(self.conditioned.checkpoint_path)
        report = augmentation_experiment(self.split.train_samples(),
                                         generate_translations(model, self.split.domain_x),
                                         self.split.test_samples(), generate_translations(model, self.split.test_x),
                                         self.split.num_expressions, seed=7)
        baseline = report.baseline.accuracy
        self.assertGreaterEqual(baseline, 0.90)
        self.assertLessEqual(abs(report.row("original", "generated").accuracy - baseline), 0.15)
        self.assertGreaterEqual(report.row("original+generated", "original").accuracy, baseline - 0.02)

    def test_conditioning_ablation_01(self) -> None:
        effect = conditioning_effect(self.unconditioned.checkpoint_path, self.split.test_x, self.classifier)
        self.assertLessEqual(abs(effect - 1.0 / self.split.num_expressions), 0.15)

    def test_expression_clusters_01(self) -> None:
        samples = self.split.test_samples()
        labels = np.array([s.label.index for s in samples])
        for seed in range(5):
            classifier = train_classifier(self.split.train_samples(), self.split.num_expressions, seed=seed)
            features = embed(classifier, [s.image for s in samples]).detach().numpy()
            self.assertGreater(silhouette(features, labels), shuffled_silhouette(features, labels, seed=seed),
                               f"seed {seed}")


if __name__ == '__main__':
    unittest.main()
