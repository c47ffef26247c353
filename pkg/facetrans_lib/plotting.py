"""
Figures rendered with matplotlib's Agg backend

Figures have a fixed size and resolution and their PNG metadata is stripped, so identical inputs give identical bytes.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from facetrans_lib.evaluation import project_2d  # noqa: E402
from facetrans_lib.exceptions import DatasetFormatError, EmptyCurveError  # noqa: E402
from facetrans_lib.sources import JsonLinesSource  # noqa: E402

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

FIGURE_SIZE = (8.0, 5.0)
DPI = 100
LOSS_TERMS = ("total", "adversarial_g", "cycle", "content", "identity", "mask")


def __save__(figure: plt.Figure, out_path: str | Path) -> Path:
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(path, format="png", dpi=DPI, metadata={"Software": None})
    plt.close(figure)
    return path


def read_metric_log(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """
    Splits a metric log into its header and its per-iteration records

    :raises DatasetFormatError: Missing file, malformed line, or no header
    """
    header: dict[str, Any] | None = None
    records = []
    with JsonLinesSource(path) as source:
        for record in source.data():
            if record.get("type") == "header":
                header = record
            elif record.get("type") == "metric":
                records.append(record)
    if header is None:
        raise DatasetFormatError(path, "Metric log has no header line")
    return header, records


def plot_score_curve(points: Sequence[tuple[int, float]], out_path: str | Path,
                     label: str = "Conditioned class probability") -> Path:
    """
    :raises EmptyCurveError: No points
    """
    if not points:
        raise EmptyCurveError("No scores to plot")
    iterations, scores = zip(*points)
    figure, axis = plt.subplots(figsize=FIGURE_SIZE)
    axis.plot(iterations, scores, marker="o")
    axis.set_xlabel("Iteration")
    axis.set_ylabel(label)
    axis.set_ylim(0.0, 1.0)
    axis.grid(True, alpha=0.3)
    return __save__(figure, out_path)


def plot_embedding_scatter(features: np.ndarray, labels: np.ndarray, names: Sequence[str], out_path: str | Path,
                           projection: str = "pca", seed: int = 0) -> Path:
    """
    Two-dimensional projection of embeddings, coloured by expression
    """
    if len(features) == 0:
        raise EmptyCurveError("No embeddings to plot")
    points = project_2d(features, projection, seed)
    figure, axis = plt.subplots(figsize=FIGURE_SIZE)
    for index in sorted(set(np.asarray(labels).tolist())):
        selected = labels == index
        name = names[index] if index < len(names) else str(index)
        axis.scatter(points[selected, 0], points[selected, 1], s=12, label=name)
    axis.set_title(f"Expression space ({projection.upper()})")
    axis.legend(loc="best")
    return __save__(figure, out_path)


def plot_loss_curves(records: Sequence[dict[str, Any]], out_path: str | Path) -> Path:
    """
    Loss terms and gradient norms against iteration, from metric records

    :raises EmptyCurveError: No metric records, e.g. a run of zero iterations
    """
    if not records:
        raise EmptyCurveError("Metric log holds no iterations")
    iterations = [r["iteration"] for r in records]
    figure, (losses, norms) = plt.subplots(2, 1, figsize=(FIGURE_SIZE[0], FIGURE_SIZE[1] * 1.5), sharex=True)
    for term in LOSS_TERMS:
        losses.plot(iterations, [r["generator"][term] for r in records], label=f"G {term}", linewidth=0.8)
    losses.plot(iterations, [r["discriminator"]["total"] for r in records], label="D total", linewidth=0.8)
    losses.set_ylabel("Loss")
    losses.legend(loc="upper right", fontsize="small")
    for network in sorted(records[0]["grad_norms"]):
        norms.plot(iterations, [r["grad_norms"][network] for r in records], label=network, linewidth=0.8)
    norms.set_xlabel("Iteration")
    norms.set_ylabel("Gradient norm")
    norms.legend(loc="upper right", fontsize="small")
    return __save__(figure, out_path)
