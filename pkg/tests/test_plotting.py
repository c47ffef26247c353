import tempfile
import unittest
from pathlib import Path

import numpy as np

from facetrans_lib.exceptions import DatasetFormatError, EmptyCurveError
from facetrans_lib.plotting import plot_embedding_scatter, plot_loss_curves, plot_score_curve, read_metric_log
from facetrans_lib.sinks import JsonLinesSink

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def metric(iteration: int) -> dict:
    terms = {"adversarial_g": 0.5, "adversarial_d": 0.4, "cycle": 1.0 / (iteration + 1), "content": 0.1,
             "identity": 0.0, "mask": 0.2, "total": 3.0 / (iteration + 1)}
    return {"type": "metric", "iteration": iteration, "generator": terms, "discriminator": {"total": 0.3},
            "grad_norms": {"g_xy": 1.0, "g_yx": 2.0, "d_x": 0.5, "d_y": 0.25}, "learning_rate": 2e-4,
            "seconds": 0.1}


def write_log(path: Path, iterations: int) -> Path:
    with JsonLinesSink(path) as sink:
        sink.send({"type": "header", "format": "facetrans-metrics", "version": 1})
        for i in range(iterations):
            sink.send(metric(i))
    return path


class TestMetricLog(unittest.TestCase):

    def test_read_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            header, records = read_metric_log(write_log(Path(tmp) / "metrics.jsonl", 4))
        self.assertEqual(header["format"], "facetrans-metrics")
        self.assertEqual([r["iteration"] for r in records], [0, 1, 2, 3])

    def test_no_header_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "metrics.jsonl"
            with JsonLinesSink(path) as sink:
                sink.send(metric(0))
            with self.assertRaisesRegex(DatasetFormatError, "no header"):
                read_metric_log(path)

    def test_malformed_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "metrics.jsonl"
            path.write_text('{"type": "header"}\n{not json\n')
            with self.assertRaisesRegex(DatasetFormatError, "Line 2"):
                read_metric_log(path)
            with self.assertRaises(DatasetFormatError):
                read_metric_log(Path(tmp) / "missing.jsonl")


class TestFigures(unittest.TestCase):

    def __assert_png__(self, path: Path) -> bytes:
        self.assertTrue(path.is_file())
        content = path.read_bytes()
        self.assertTrue(content.startswith(PNG_SIGNATURE))
        return content

    def test_loss_curves_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            _, records = read_metric_log(write_log(Path(tmp) / "metrics.jsonl", 5))
            first = self.__assert_png__(plot_loss_curves(records, Path(tmp) / "a" / "losses.png"))
            second = self.__assert_png__(plot_loss_curves(records, Path(tmp) / "b" / "losses.png"))
        self.assertEqual(first, second)

    def test_loss_curves_empty_01(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            _, records = read_metric_log(write_log(Path(tmp) / "metrics.jsonl", 0))
            with self.assertRaises(EmptyCurveError):
                plot_loss_curves(records, Path(tmp) / "losses.png")
            self.assertFalse((Path(tmp) / "losses.png").exists())

    def test_score_curve_01(self) -> None:
        points = [(0, 0.25), (500, 0.5), (1000, 0.8)]
        with tempfile.TemporaryDirectory() as tmp:
            first = self.__assert_png__(plot_score_curve(points, Path(tmp) / "s1.png"))
            second = self.__assert_png__(plot_score_curve(points, Path(tmp) / "s2.png"))
            with self.assertRaises(EmptyCurveError):
                plot_score_curve([], Path(tmp) / "empty.png")
        self.assertEqual(first, second)

    def test_embedding_scatter_01(self) -> None:
        rng = np.random.default_rng(0)
        labels = np.repeat(np.arange(4), 6)
        features = rng.normal(size=(24, 8)) + 3.0 * np.eye(8)[labels]
        names = ["neutral", "happy", "anger", "surprise"]
        with tempfile.TemporaryDirectory() as tmp:
            first = self.__assert_png__(plot_embedding_scatter(features, labels, names, Path(tmp) / "p1.png"))
            second = self.__assert_png__(plot_embedding_scatter(features, labels, names, Path(tmp) / "p2.png"))
            self.__assert_png__(plot_embedding_scatter(features, labels, names[:2], Path(tmp) / "t.png",
                                                       projection="tsne", seed=1))
            with self.assertRaises(EmptyCurveError):
                plot_embedding_scatter(np.zeros((0, 8)), np.zeros(0, dtype=int), names, Path(tmp) / "e.png")
        self.assertEqual(first, second)


if __name__ == '__main__':
    unittest.main()
