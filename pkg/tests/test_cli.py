import contextlib
import io
import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
import torch

from facetrans_lib.classifier import save_classifier, train_classifier
from facetrans_lib.cli import main
from facetrans_lib.faces_synth import load_dataset, save_dataset
from facetrans_lib.images import read_mask_png, read_png, write_png
from facetrans_lib.reporter import MANIFEST_FILE, MANIFEST_FORMAT, read_manifest
from facetrans_lib.sinks import JsonLinesSink
from tests.fixtures import QUICK_CLASSIFIER as FIXTURE_CLASSIFIER
from tests.fixtures import small_split

TINY_NETWORKS = ["--encoder-channels", "4,8", "--bottleneck-width", "16", "--disc-channels", "8,16"]
QUICK_CLASSIFIER = ["--classifier-steps", "5", "--classifier-batch-size", "4", "--feature-dim", "8"]


def run_cli(*args: str) -> tuple[int, str]:
    stderr = io.StringIO()
    with contextlib.redirect_stderr(stderr):
        code = main([*map(str, args), "--quiet"] if args else [])
    return code, stderr.getvalue()


class CliVerifier(unittest.TestCase):
    """
    A saved synthetic dataset and a two iteration training run on it
    """

    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.split = small_split()
        cls.data = cls.root / "data"
        save_dataset(cls.split, cls.data)
        cls.run_dir = cls.root / "run"
        code, stderr = run_cli("train", "--data", cls.data, "--out", cls.run_dir, "--seed", 3, "--iterations", 2,
                               "--checkpoint-every", 1, "--lambda2", 0, *TINY_NETWORKS)
        if code != 0:
            raise AssertionError(f"Training run failed with exit code {code}: {stderr}")
        cls.checkpoint = cls.run_dir / "checkpoints" / "ckpt_000002.npz"

    @classmethod
    def tearDownClass(cls) -> None:
        cls.tmp.cleanup()

    def setUp(self) -> None:
        self.out = Path(tempfile.mkdtemp(dir=self.tmp.name))

    def __validate_manifest__(self, directory: Path, command: str, status: str) -> dict:
        manifest = read_manifest(directory)
        self.assertEqual(manifest["format"], MANIFEST_FORMAT)
        self.assertEqual(manifest["command"], command)
        self.assertEqual(manifest["status"], status)
        self.assertIsNotNone(manifest["started"])
        self.assertIsNotNone(manifest["ended"])
        return manifest


class TestUsage(CliVerifier):

    def test_no_command_01(self) -> None:
        self.assertEqual(run_cli()[0], 2)

    def test_unknown_flag_01(self) -> None:
        self.assertEqual(run_cli("train", "--no-such-flag", 1)[0], 2)

    def test_missing_out_01(self) -> None:
        code, stderr = run_cli("generate-dataset", "--seed", 1)
        self.assertEqual(code, 2)
        self.assertIn("out", stderr)

    def test_missing_seed_01(self) -> None:
        code, stderr = run_cli("generate-dataset", "--out", self.out / "d", "--identities", 4)
        self.assertEqual(code, 2)
        self.assertIn("seed", stderr)
        manifest = self.__validate_manifest__(self.out / "d", "generate-dataset", "ERRORING")
        self.assertEqual(manifest["error"]["type"], "ConfigurationError")
        self.assertTrue((self.out / "d" / "errors.jsonl").is_file())

    def test_bad_choice_01(self) -> None:
        self.assertEqual(run_cli("train", "--data", self.data, "--out", self.out, "--seed", 1,
                                 "--condition-mode", "sideways")[0], 2)

    def test_missing_data_01(self) -> None:
        self.assertEqual(run_cli("train", "--data", self.root / "nothing", "--out", self.out, "--seed", 1)[0], 2)


class TestGenerateDataset(CliVerifier):

    def test_generate_01(self) -> None:
        out = self.out / "dataset"
        code, _ = run_cli("generate-dataset", "--out", out, "--identities", 8, "--size", 32, "--seed", 3,
                          "--test-fraction", 0.25)
        self.assertEqual(code, 0)
        manifest = self.__validate_manifest__(out, "generate-dataset", "COMPLETED")
        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(manifest["config"]["identities"], 8)
        self.assertEqual(manifest["outputs"]["index"], str(out / "index.json"))
        self.assertEqual(load_dataset(out).content_hash(), load_dataset(self.data).content_hash())
        self.assertTrue((out / "run.log").is_file())
        self.assertFalse((out / "errors.jsonl").exists())

    def test_manifest_as_config_01(self) -> None:
        first, second = self.out / "first", self.out / "second"
        self.assertEqual(run_cli("generate-dataset", "--out", first, "--identities", 6, "--size", 32, "--seed", 9)[0],
                         0)
        self.assertEqual(run_cli("generate-dataset", "--config", first / MANIFEST_FILE, "--out", second)[0], 0)
        self.assertEqual(load_dataset(first).content_hash(), load_dataset(second).content_hash())
        self.assertEqual(read_manifest(second)["seed"], 9)

    def test_manifest_of_other_command_01(self) -> None:
        code, stderr = run_cli("translate", "--config", self.run_dir / MANIFEST_FILE, "--out", self.out / "x.png")
        self.assertEqual(code, 2)
        self.assertIn("train", stderr)

    def test_config_file_01(self) -> None:
        config = self.out / "settings.json"
        config.write_text(json.dumps({"identities": 4, "size": "32", "seed": 5}))
        out = self.out / "dataset"
        self.assertEqual(run_cli("generate-dataset", "--config", config, "--out", out, "--seed", 6)[0], 0)
        manifest = read_manifest(out)
        self.assertEqual(manifest["seed"], 6)
        self.assertEqual(manifest["config"]["identities"], 4)

    def test_bad_config_file_01(self) -> None:
        config = self.out / "settings.json"
        config.write_text("[1, 2]")
        self.assertEqual(run_cli("generate-dataset", "--config", config, "--out", self.out / "d")[0], 2)

    def test_environment_01(self) -> None:
        out = self.out / "dataset"
        with mock.patch.dict(os.environ, {"FACETRANS_SEED": "4", "FACETRANS_IDENTITIES": "4"}):
            self.assertEqual(run_cli("generate-dataset", "--out", out, "--size", 32)[0], 0)
        self.assertEqual(read_manifest(out)["seed"], 4)


class TestMask(CliVerifier):

    def test_landmarks_01(self) -> None:
        sample = self.split.test_x[0]
        landmarks = self.out / "face.json"
        landmarks.write_text(json.dumps(sample.landmarks.to_json()))
        out = self.out / "mask.png"
        self.assertEqual(run_cli("mask", "--landmarks", landmarks, "--size", 32, "--out", out)[0], 0)
        mask = read_mask_png(out)
        self.assertEqual(mask.shape, (32, 32))
        self.assertGreater(int(mask.sum()), 0)
        self.__validate_manifest__(self.out, "mask", "COMPLETED")

    def test_landmarks_from_image_size_01(self) -> None:
        sample = self.split.test_x[0]
        (self.out / "face.json").write_text(json.dumps(sample.landmarks.to_json()))
        write_png(sample.image, self.out / "face.png")
        self.assertEqual(run_cli("mask", "--landmarks", self.out / "face.json", "--image", self.out / "face.png",
                                 "--out", self.out / "mask.png")[0], 0)
        self.assertEqual(read_mask_png(self.out / "mask.png").shape, (32, 32))

    def test_dataset_01(self) -> None:
        out = self.out / "masked"
        self.assertEqual(run_cli("mask", "--data", self.data, "--out", out, "--overwrite")[0], 0)
        filled = load_dataset(out)
        self.assertTrue(all(s.mask is not None for s in filled.train_samples()))
        self.assertEqual(len(filled.test_x), len(self.split.test_x))

    def test_dataset_in_place_01(self) -> None:
        self.assertEqual(run_cli("mask", "--data", self.data, "--out", self.data)[0], 2)

    def test_missing_inputs_01(self) -> None:
        self.assertEqual(run_cli("mask", "--out", self.out / "m.png")[0], 2)
        (self.out / "bad.json").write_text("{")
        self.assertEqual(run_cli("mask", "--landmarks", self.out / "bad.json", "--size", 32,
                                 "--out", self.out / "m.png")[0], 1)


class TestTrain(CliVerifier):

    def test_outputs_01(self) -> None:
        manifest = self.__validate_manifest__(self.run_dir, "train", "COMPLETED")
        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(manifest["config"]["lambda2"], 0.0)
        self.assertEqual(Path(manifest["outputs"]["checkpoint"]), self.checkpoint)
        self.assertEqual(sorted(p.name for p in (self.run_dir / "checkpoints").iterdir()),
                         ["ckpt_000000.npz", "ckpt_000001.npz", "ckpt_000002.npz"])
        self.assertTrue((self.run_dir / "metrics.jsonl").is_file())

    def test_numerical_instability_01(self) -> None:
        with mock.patch("facetrans_lib.training.cycle_loss", return_value=torch.tensor(float("nan"))):
            code, _ = run_cli("train", "--data", self.data, "--out", self.out, "--seed", 3, "--iterations", 2,
                              "--lambda2", 0, *TINY_NETWORKS)
        self.assertEqual(code, 3)
        manifest = self.__validate_manifest__(self.out, "train", "UNSTABLE")
        self.assertEqual(manifest["error"]["type"], "NumericalInstabilityError")
        self.assertTrue(manifest["error"]["checkpoint_path"].endswith("ckpt_000000.npz"))

    def test_classifier_mismatch_01(self) -> None:
        classifier = save_classifier(train_classifier(self.split.train_samples(), 4, FIXTURE_CLASSIFIER, seed=0),
                                     self.out / "classifier.npz", self.split.expressions, seed=0)
        other_data = self.out / "other"
        save_dataset(small_split(expressions=("neutral", "happy", "sad")), other_data)
        code, stderr = run_cli("train", "--data", other_data, "--out", self.out / "run", "--seed", 1,
                               "--classifier", classifier, "--iterations", 0, *TINY_NETWORKS)
        self.assertEqual(code, 2)
        self.assertIn("expressions", stderr)


class TestTranslate(CliVerifier):

    def test_single_image_01(self) -> None:
        write_png(self.split.test_x[0].image, self.out / "face.png")
        out = self.out / "happy.png"
        self.assertEqual(run_cli("translate", "--checkpoint", self.checkpoint, "--in", self.out / "face.png",
                                 "--target-expression", "happy", "--out", out)[0], 0)
        self.assertEqual(read_png(out).shape, (32, 32, 3))

    def test_directory_01(self) -> None:
        source = self.out / "in"
        for i, sample in enumerate(self.split.test_x[:3]):
            write_png(sample.image, source / f"face{i}.png")
        out = self.out / "translated"
        self.assertEqual(run_cli("translate", "--checkpoint", self.checkpoint, "--in-dir", source,
                                 "--target-expression", "anger", "--out", out)[0], 0)
        self.assertEqual(sorted(p.name for p in out.glob("*.png")),
                         ["face0_anger.png", "face1_anger.png", "face2_anger.png"])

    def test_unknown_target_01(self) -> None:
        write_png(self.split.test_x[0].image, self.out / "face.png")
        code, stderr = run_cli("translate", "--checkpoint", self.checkpoint, "--in", self.out / "face.png",
                               "--target-expression", "bored", "--out", self.out / "o.png")
        self.assertEqual(code, 2)
        self.assertIn("bored", stderr)

    def test_missing_checkpoint_01(self) -> None:
        write_png(self.split.test_x[0].image, self.out / "face.png")
        self.assertEqual(run_cli("translate", "--checkpoint", self.out / "none.npz", "--in", self.out / "face.png",
                                 "--target-expression", "happy", "--out", self.out / "o.png")[0], 1)

    def test_wrong_size_01(self) -> None:
        write_png(np.zeros((16, 16, 3), dtype=np.float32), self.out / "small.png")
        self.assertEqual(run_cli("translate", "--checkpoint", self.checkpoint, "--in", self.out / "small.png",
                                 "--target-expression", "happy", "--out", self.out / "o.png")[0], 2)

    def test_inputs_01(self) -> None:
        self.assertEqual(run_cli("translate", "--checkpoint", self.checkpoint, "--target-expression", "happy",
                                 "--out", self.out / "o.png")[0], 2)


class TestEvaluateAndPlot(CliVerifier):

    def test_evaluate_01(self) -> None:
        out = self.out / "eval"
        code, stderr = run_cli("evaluate", "--data", self.data, "--run", self.run_dir, "--seed", 0, "--score-curve",
                               "--out", out, *QUICK_CLASSIFIER)
        self.assertEqual(code, 0, stderr)
        report = json.loads((out / "evaluation.json").read_text())
        self.assertEqual(report["iteration"], 2)
        self.assertEqual([r["test_set"] for r in report["augmentation"]["rows"]],
                         ["original", "original", "generated"])
        self.assertGreaterEqual(report["conditioning_effect"], 0.0)
        self.assertIn("silhouette", report)
        self.assertIn("Accuracy (%)", (out / "table.txt").read_text())
        self.assertEqual(len((out / "scores.jsonl").read_text().splitlines()), 3)
        self.__validate_manifest__(out, "evaluate", "COMPLETED")

        figures = self.out / "figures"
        code, stderr = run_cli("plot", "--metrics", self.run_dir / "metrics.jsonl", "--scores", out / "scores.jsonl",
                               "--embeddings", out / "embeddings.txt", "--out", figures)
        self.assertEqual(code, 0, stderr)
        self.assertEqual(sorted(p.name for p in figures.glob("*.png")),
                         ["embedding_pca.png", "loss_curves.png", "score_curve.png"])

    def test_evaluate_needs_checkpoint_01(self) -> None:
        self.assertEqual(run_cli("evaluate", "--data", self.data, "--seed", 0, "--out", self.out)[0], 2)

    def test_score_curve_needs_run_01(self) -> None:
        self.assertEqual(run_cli("evaluate", "--data", self.data, "--checkpoint", self.checkpoint, "--seed", 0,
                                 "--score-curve", "--out", self.out)[0], 2)

    def test_plot_empty_log_01(self) -> None:
        log = self.out / "metrics.jsonl"
        with JsonLinesSink(log) as sink:
            sink.send({"type": "header", "format": "facetrans-metrics", "version": 1})
        code, _ = run_cli("plot", "--metrics", log, "--out", self.out / "figures")
        self.assertEqual(code, 2)
        self.__validate_manifest__(self.out / "figures", "plot", "ERRORING")

    def test_plot_tsne_needs_seed_01(self) -> None:
        table = self.out / "embeddings.txt"
        np.savetxt(table, np.column_stack([np.random.default_rng(0).normal(size=(12, 3)), np.arange(12) % 3]))
        self.assertEqual(run_cli("plot", "--embeddings", table, "--projection", "tsne", "--out", self.out / "f")[0], 2)
        self.assertEqual(run_cli("plot", "--embeddings", table, "--projection", "tsne", "--seed", 1,
                                 "--out", self.out / "g")[0], 0)
        self.assertTrue((self.out / "g" / "embedding_tsne.png").is_file())

    def test_plot_nothing_01(self) -> None:
        self.assertEqual(run_cli("plot", "--out", self.out)[0], 2)


if __name__ == '__main__':
    unittest.main()
