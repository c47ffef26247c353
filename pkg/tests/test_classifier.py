import tempfile
import unittest
from pathlib import Path

import numpy as np
import torch

from facetrans_lib.checkpoints import save_checkpoint
from facetrans_lib.classifier import (
    ClassifierConfig, ExpressionClassifier, accuracy, as_pairs, classification_loss, classify, embed,
    extract_features, load_classifier, predict, save_classifier, train_classifier,
)
from facetrans_lib.exceptions import CheckpointError, InvalidArgumentError
from facetrans_lib.faces_synth import generate_dataset
from facetrans_lib.nets import init_params
from tests.fixtures import SLOW_TESTS, SMALL_SIZE, TensorVerifier, small_split, tiny_arch

QUICK = ClassifierConfig(steps=20, batch_size=8, feature_dim=16)


class TestExpressionClassifier(TensorVerifier):

    def test_posterior_01(self) -> None:
        torch.manual_seed(0)
        model = ExpressionClassifier(4, (32, 32), feature_dim=16)
        probabilities = classify(model, torch.rand(5, 3, 32, 32))
        self.assertEqual(probabilities.shape, (5, 4))
        self.__assert_close__(probabilities.sum(dim=1), torch.ones(5), 1e-6)
        self.assertTrue(torch.all(probabilities >= 0))

    def test_numpy_input_01(self) -> None:
        model = ExpressionClassifier(3, (16, 16), feature_dim=8)
        image = np.zeros((16, 16, 3), dtype=np.float32)
        self.assertEqual(predict(model, image).shape, (1, 3))
        self.assertEqual(embed(model, [image, image]).shape, (2, 8))

    def test_features_01(self) -> None:
        model = ExpressionClassifier(4, (32, 32), feature_dim=16)
        self.assertEqual(model.layer_ids, [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2)])
        features = extract_features(model, torch.rand(2, 3, 32, 32), (2, 2))
        self.assertEqual(features.layer_id, (2, 2))
        self.assertEqual(features.tensor.shape, (2, 32, 16, 16))
        self.assertTrue(torch.all(features.tensor >= 0))
        self.assertEqual(extract_features(model, torch.rand(1, 3, 32, 32), (1, 1)).tensor.shape, (1, 16, 32, 32))

    def test_bad_inputs_01(self) -> None:
        model = ExpressionClassifier(4, (32, 32), feature_dim=16)
        with self.assertRaisesRegex(InvalidArgumentError, "Unknown layer"):
            extract_features(model, torch.rand(1, 3, 32, 32), (4, 1))
        with self.assertRaises(InvalidArgumentError):
            classify(model, torch.rand(1, 3, 16, 16))
        with self.assertRaises(InvalidArgumentError):
            ExpressionClassifier(4, (20, 20))

    def test_loss_01(self) -> None:
        model = ExpressionClassifier(2, (8, 8), feature_dim=4)
        images = torch.rand(3, 3, 8, 8)
        targets = torch.tensor([0, 1, 1])
        logits = model(images)
        expected = -torch.log_softmax(logits, dim=1)[torch.arange(3), targets].mean()
        self.__assert_close__(classification_loss(model, images, targets), expected, 1e-6)


class TestTraining(TensorVerifier):

    def test_train_01(self) -> None:
        split = small_split()
        model = train_classifier(split.train_samples(), 4, QUICK, seed=1)
        self.assertIsNotNone(model.report)
        self.assertEqual(model.report.steps, 20)
        self.assertEqual(model.report.n_train + model.report.n_validation, len(split.train_samples()))
        self.assertFalse(model.training)
        value = accuracy(model, [s.image for s in split.test_samples()], [s.label for s in split.test_samples()])
        self.assertGreaterEqual(value, 0.0)
        self.assertLessEqual(value, 1.0)

    def test_train_deterministic_01(self) -> None:
        split = small_split()
        first = train_classifier(split.train_samples(), 4, QUICK, seed=4)
        second = train_classifier(split.train_samples(), 4, QUICK, seed=4)
        images = torch.rand(3, 3, 32, 32)
        self.__assert_close__(predict(first, images), predict(second, images), 0.0)

    def test_train_pairs_01(self) -> None:
        split = small_split()
        pairs = as_pairs(split.train_samples())
        self.assertEqual(len(pairs), len(split.train_samples()))
        model = train_classifier(pairs, 4, ClassifierConfig(steps=2, batch_size=4, feature_dim=8))
        self.assertEqual(model.num_expressions, 4)

    def test_bad_training_data_01(self) -> None:
        split = small_split()
        with self.assertRaisesRegex(InvalidArgumentError, "single expression"):
            train_classifier(split.domain_x, 4, QUICK)
        with self.assertRaises(InvalidArgumentError):
            train_classifier(split.train_samples(), 3, QUICK)
        with self.assertRaises(InvalidArgumentError):
            train_classifier([], 4, QUICK)
        with self.assertRaises(InvalidArgumentError):
            accuracy(ExpressionClassifier(4, (32, 32)), [], [])

    def test_save_load_01(self) -> None:
        split = small_split()
        model = train_classifier(split.train_samples(), 4, QUICK, seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_classifier(model, Path(tmp) / "classifier.npz", split.expressions, seed=2)
            loaded, expressions = load_classifier(path)
        self.assertEqual(expressions, split.expressions)
        self.assertEqual(loaded.report, model.report)
        images = torch.rand(2, 3, 32, 32)
        self.__assert_close__(predict(loaded, images), predict(model, images), 0.0)

    def test_shuffled_labels_01(self) -> None:
        # Balanced held-out classes: 24 identities per domain
        split = generate_dataset(120, size=SMALL_SIZE, seed=21, test_fraction=0.4)
        rng = np.random.default_rng(0)

        def shuffled(samples: list) -> list:
            pairs = as_pairs(samples)
            labels = [pairs[i][1] for i in rng.permutation(len(pairs))]
            return [(image, label) for (image, _), label in zip(pairs, labels)]

        train, test = shuffled(split.train_samples()), shuffled(split.test_samples())
        model = train_classifier(train, split.num_expressions, ClassifierConfig(steps=40, batch_size=8,
                                                                                feature_dim=16), seed=0)
        value = accuracy(model, [image for image, _ in test], [label for _, label in test])
        self.assertLessEqual(abs(value - 1 / split.num_expressions), 0.15)

    def test_wrong_kind_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "t.npz", dict(init_params(tiny_arch(), 0).items()),
                                   {"kind": "translation"})
            with self.assertRaisesRegex(CheckpointError, "classifier"):
                load_classifier(path)

    @unittest.skipUnless(SLOW_TESTS, "Set FACETRANS_SLOW_TESTS=1 to run full-size classifier training")
    def test_held_out_accuracy_01(self) -> None:
        split = generate_dataset(100, seed=11, test_fraction=0.2)
        model = train_classifier(split.train_samples(), split.num_expressions, ClassifierConfig(), seed=0)
        test = split.test_samples()
        self.assertGreaterEqual(accuracy(model, [s.image for s in test], [s.label for s in test]), 0.9)


if __name__ == '__main__':
    unittest.main()
