"""
Classifier-based evaluation of translation models

Covers the conditioned class probability score, the recognition experiment with generated data (baseline, augmented
training and generated test rows), the conditioning effect, and embedding export for cluster plots.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from sklearn.decomposition import PCA
from sklearn.manifold import TSNE
from sklearn.metrics import silhouette_score

from facetrans_lib.classifier import (
    ClassifierConfig,
    ExpressionClassifier,
    accuracy,
    as_pairs,
    embed,
    predict,
    train_classifier,
)
from facetrans_lib.exceptions import DatasetFormatError, InvalidArgumentError
from facetrans_lib.faces_synth import ExpressionLabel, Sample, identity_ids
from facetrans_lib.training import CHECKPOINT_DIR, Direction, TranslationModel, load_translation_model, translate

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

PROJECTIONS = ("pca", "tsne")
LabelledImages = Sequence[Sample | tuple[np.ndarray, ExpressionLabel]]


@dataclass(frozen=True)
class VggScoreReport:
    mean_conditioned_probability: float
    top1_accuracy: float
    per_class: dict[str, dict[str, float]]
    n_samples: int

    def to_json(self) -> dict[str, Any]:
        return {"mean_conditioned_probability": self.mean_conditioned_probability,
                "top1_accuracy": self.top1_accuracy, "per_class": self.per_class, "n_samples": self.n_samples}


@dataclass(frozen=True)
class AugmentationRow:
    method: str
    train_set: str
    test_set: str
    accuracy: float


@dataclass(frozen=True)
class AugmentationReport:
    rows: tuple[AugmentationRow, ...]
    seed: int
    notes: dict[str, Any] = field(default_factory=dict)

    def row(self, train_set: str, test_set: str, method: str | None = None) -> AugmentationRow:
        for row in self.rows:
            if row.train_set == train_set and row.test_set == test_set and method in (None, row.method):
                return row
        raise KeyError(f"No row for train={train_set}, test={test_set}, method={method}")

    @property
    def baseline(self) -> AugmentationRow:
        return self.row("original", "original")

    def to_json(self) -> dict[str, Any]:
        return {"seed": self.seed, "notes": self.notes,
                "rows": [{"method": r.method, "train_set": r.train_set, "test_set": r.test_set,
                          "accuracy": r.accuracy} for r in self.rows]}

    def to_table(self) -> str:
        header = ("Method", "Train", "Test", "Accuracy (%)")
        body = [(r.method, r.train_set, r.test_set, f"{100.0 * r.accuracy:.2f}") for r in self.rows]
        widths = [max(len(str(line[i])) for line in (header, *body)) for i in range(len(header))]
        lines = [" | ".join(str(v).ljust(w) for v, w in zip(line, widths)) for line in (header, *body)]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines)


def vgg_score(model: ExpressionClassifier, generated: LabelledImages) -> VggScoreReport:
    """
    Mean classifier probability of each image's conditioning class, with top-1 accuracy against that class

    :param generated: Generated images paired with the expression they were conditioned on
    :raises InvalidArgumentError: Empty input
    """
    pairs = as_pairs(generated)
    if not pairs:
        raise InvalidArgumentError("Cannot score an empty set of images")
    probabilities = predict(model, [image for image, _ in pairs]).numpy().astype(np.float64)
    targets = np.array([label.index for _, label in pairs])
    conditioned = probabilities[np.arange(len(pairs)), targets]
    hits = probabilities.argmax(axis=1) == targets

    per_class = {}
    for label in sorted({label for _, label in pairs}):
        selected = targets == label.index
        per_class[label.name] = {"n": int(selected.sum()),
                                 "mean_probability": float(conditioned[selected].mean()),
                                 "top1": float(hits[selected].mean())}
    return VggScoreReport(mean_conditioned_probability=float(conditioned.mean()), top1_accuracy=float(hits.mean()),
                          per_class=per_class, n_samples=len(pairs))


def generate_translations(model: TranslationModel, samples: Sequence[Sample],
                          targets: Sequence[ExpressionLabel] | None = None) -> list[Sample]:
    """
    Translates neutral samples into every non-neutral target and expressive samples into neutral

    Generated samples keep their source's identity and landmarks and carry no mask.
    """
    non_neutral = [e for e in (model.expressions if targets is None else targets) if e.index != 0]
    neutral_sources = [s for s in samples if s.label.index == 0]
    expressive_sources = [s for s in samples if s.label.index != 0]
    generated = []
    if neutral_sources:
        for target in non_neutral:
            outputs = translate(model, [s.image for s in neutral_sources], target, Direction.X_TO_Y)
            generated += [Sample(out, target, None, s.landmarks, s.identity_id)
                          for out, s in zip(outputs, neutral_sources)]
    if expressive_sources:
        neutral = model.expressions[0]
        outputs = translate(model, [s.image for s in expressive_sources], neutral, Direction.Y_TO_X)
        generated += [Sample(out, neutral, None, s.landmarks, s.identity_id)
                      for out, s in zip(outputs, expressive_sources)]
    return generated


def check_identity_leakage(train: Sequence[Sample], test: Sequence[Sample]) -> None:
    """
    :raises InvalidArgumentError: An identity appears on both sides
    """
    shared = identity_ids(train) & identity_ids(test)
    if shared:
        raise InvalidArgumentError(f"Identities {sorted(shared)[:10]} appear in both training and test data")


def augmentation_experiment(real_train: Sequence[Sample], generated_train: Sequence[Sample],
                            real_test: Sequence[Sample], generated_test: Sequence[Sample], num_expressions: int,
                            config: ClassifierConfig | None = None, seed: int = 0, method: str = "conditioned",
                            baseline: ExpressionClassifier | None = None,
                            include_baseline: bool = True) -> AugmentationReport:
    """
    Trains recognition classifiers with and without generated data and reports three conditions:

    - baseline: train on original images, test on original images
    - augmented: train on original plus generated images, test on original images
    - generated-test: train on original images, test on generated images

    All classifiers share `seed`.  The generated-test row reuses the baseline classifier, which is what a second
    training run with the same seed would reproduce.

    :param baseline: A classifier already trained on `real_train` with `seed`, trained here when absent
    :param include_baseline: Whether to emit the baseline row, off when adding rows for another method
    :raises InvalidArgumentError: Identity leakage between training and test data
    """
    config = config or ClassifierConfig()
    check_identity_leakage([*real_train, *generated_train], [*real_test, *generated_test])
    if baseline is None:
        baseline = train_classifier(real_train, num_expressions, config, seed)

    def evaluate(model: ExpressionClassifier, samples: Sequence[Sample]) -> float:
        return accuracy(model, [s.image for s in samples], [s.label for s in samples])

    rows = []
    baseline_accuracy = evaluate(baseline, real_test)
    if include_baseline:
        rows.append(AugmentationRow("real", "original", "original", baseline_accuracy))
    if generated_train:
        augmented = train_classifier([*real_train, *generated_train], num_expressions, config, seed)
        rows.append(AugmentationRow(method, "original+generated", "original", evaluate(augmented, real_test)))
    else:
        rows.append(AugmentationRow(method, "original+generated", "original", baseline_accuracy))
    if generated_test:
        rows.append(AugmentationRow(method, "original", "generated", evaluate(baseline, generated_test)))

    report = AugmentationReport(tuple(rows), seed, {"n_real_train": len(real_train),
                                                    "n_generated_train": len(generated_train),
                                                    "n_real_test": len(real_test),
                                                    "n_generated_test": len(generated_test)})
    for row in report.rows:
        logger.info(f"{row.method}: train {row.train_set}, test {row.test_set}, accuracy {row.accuracy:.4f}")
    return report


def merge_reports(*reports: AugmentationReport) -> AugmentationReport:
    rows = tuple(row for report in reports for row in report.rows)
    return replace(reports[0], rows=rows)


def conditioning_effect(checkpoint: str | Path | TranslationModel, test_x: Sequence[Sample],
                        model: ExpressionClassifier) -> float:
    """
    Fraction of (neutral test image, non-neutral target) pairs whose translation the classifier assigns to the target
    """
    translator = checkpoint if isinstance(checkpoint, TranslationModel) else load_translation_model(checkpoint)
    if not test_x:
        raise InvalidArgumentError("Cannot measure the conditioning effect without test images")
    generated = generate_translations(translator, [s for s in test_x if s.label.index == 0])
    if not generated:
        raise InvalidArgumentError("The test set holds no neutral images to translate")
    return accuracy(model, [s.image for s in generated], [s.label for s in generated])


def export_embeddings(model: ExpressionClassifier, items: LabelledImages, out_path: str | Path) -> Path:
    """
    Writes one row per image: `feature_dim` embedding values followed by the integer label
    """
    pairs = as_pairs(items)
    if not pairs:
        raise InvalidArgumentError("No images to embed")
    features = np.concatenate([embed(model, [image for image, _ in pairs[i:i + 256]]).detach().numpy()
                               for i in range(0, len(pairs), 256)]).astype(np.float64)
    labels = np.array([label.index for _, label in pairs], dtype=np.float64)
    columns = [f"f{i}" for i in range(features.shape[1])] + ["label"]
    path = Path(out_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack([features, labels]), fmt=["%.8e"] * features.shape[1] + ["%d"],
                   delimiter=" ", header=" ".join(columns), comments="# ")
    except OSError as e:
        raise OSError(f"Cannot write embeddings to {path}: {e}") from e
    return path


def load_embeddings(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """
    :raises DatasetFormatError: Missing or malformed table
    """
    try:
        table = np.loadtxt(path, comments="#", ndmin=2)
    except (OSError, ValueError) as e:
        raise DatasetFormatError(path, f"Cannot read embedding table ({e})") from e
    if table.shape[1] < 2:
        raise DatasetFormatError(path, "Embedding table needs feature columns and a label column")
    return table[:, :-1], table[:, -1].astype(int)


def silhouette(features: np.ndarray, labels: np.ndarray) -> float:
    if len(set(np.asarray(labels).tolist())) < 2:
        raise InvalidArgumentError("Silhouette needs at least two labels")
    return float(silhouette_score(features, labels, metric="euclidean"))


def shuffled_silhouette(features: np.ndarray, labels: np.ndarray, seed: int) -> float:
    return silhouette(features, np.random.default_rng(seed).permutation(labels))


def centroid_separation(features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """
    Mean distance between class centroids and mean distance of points to their own centroid
    """
    classes = sorted(set(np.asarray(labels).tolist()))
    centroids = np.stack([features[labels == c].mean(axis=0) for c in classes])
    intra = float(np.mean([np.linalg.norm(features[labels == c] - centroids[i], axis=1).mean()
                           for i, c in enumerate(classes)]))
    pairs = [np.linalg.norm(centroids[i] - centroids[j])
             for i in range(len(classes)) for j in range(i + 1, len(classes))]
    return float(np.mean(pairs)) if pairs else 0.0, intra


def project_2d(features: np.ndarray, method: str = "pca", seed: int = 0) -> np.ndarray:
    """
    Deterministic principal-component projection, or t-SNE seeded by `seed`
    """
    if method not in PROJECTIONS:
        raise InvalidArgumentError(f"Projection must be one of {', '.join(PROJECTIONS)}, got {method}")
    features = np.asarray(features, dtype=np.float64)
    if len(features) < 3:
        raise InvalidArgumentError("Projection needs at least three points")
    if method == "pca":
        return PCA(n_components=2, svd_solver="full").fit_transform(features)
    perplexity = float(min(30, len(features) - 1))
    return TSNE(n_components=2, perplexity=perplexity, init="pca", random_state=seed).fit_transform(features)


def score_checkpoints(run_dir: str | Path, model: ExpressionClassifier, test_x: Sequence[Sample],
                      progress: Callable[[int], None] | None = None) -> list[tuple[int, VggScoreReport]]:
    """
    Conditioned class probability score of every checkpoint saved by a training run, in iteration order
    """
    paths = sorted((Path(run_dir) / CHECKPOINT_DIR).glob("ckpt_*.npz"))
    if not paths:
        raise DatasetFormatError(Path(run_dir) / CHECKPOINT_DIR, "Run directory holds no checkpoints")
    neutral = [s for s in test_x if s.label.index == 0]
    scores = []
    for path in paths:
        translator = load_translation_model(path)
        scores.append((translator.iteration, vgg_score(model, generate_translations(translator, neutral))))
        if progress is not None:
            progress(translator.iteration)
    return scores
