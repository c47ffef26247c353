"""
The `facetrans` command line tool

Every subcommand reads its settings through a `Configurator` layered over the command line flags, an optional
`--config` JSON file (or a previous run's `manifest.json`) and `FACETRANS_` environment variables, in that order of
precedence.  Every subcommand writes a `manifest.json` next to its outputs, whether it succeeds or fails.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 numerical instability.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from facetrans_lib.action import Action
from facetrans_lib.classifier import ClassifierConfig, load_classifier, train_classifier
from facetrans_lib.config import (
    ConfigSource,
    Configurator,
    DictionarySource,
    EnvironmentSource,
    JsonFileSource,
    LayeredSource,
    string_to_bool,
    to_int_tuple,
    to_name_list,
)
from facetrans_lib.errors import (
    EXIT_NUMERICAL_INSTABILITY,
    EXIT_OK,
    EXIT_USAGE_ERROR,
    FileBasedErrorHandler,
    exit_code_for,
)
from facetrans_lib.evaluation import (
    PROJECTIONS,
    augmentation_experiment,
    conditioning_effect,
    export_embeddings,
    generate_translations,
    load_embeddings,
    merge_reports,
    score_checkpoints,
    shuffled_silhouette,
    silhouette,
    vgg_score,
)
from facetrans_lib.exceptions import ConfigurationError, DatasetFormatError, FacetransError, InvalidArgumentError
from facetrans_lib.faces_synth import (
    DEFAULT_EXPRESSIONS,
    Landmarks,
    find_expression,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from facetrans_lib.images import read_png, write_mask_png, write_png
from facetrans_lib.logging import RunLoggerFactory
from facetrans_lib.losses import LossWeights
from facetrans_lib.mask import fill_missing_masks, landmarks_to_mask
from facetrans_lib.nets import DISC_CONDITION_MODES, ArchConfig
from facetrans_lib.plotting import plot_embedding_scatter, plot_loss_curves, plot_score_curve, read_metric_log
from facetrans_lib.reporter import MANIFEST_FORMAT, ManifestReporter
from facetrans_lib.sinks import JsonLinesSink, Serializers
from facetrans_lib.sources import JsonLinesSource
from facetrans_lib.status import Status
from facetrans_lib.training import (
    CHECKPOINT_DIR,
    CONDITION_MODES,
    MASK_SOURCES,
    Direction,
    TrainConfig,
    load_translation_model,
    train,
    translate,
)

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

PROG = "facetrans"
RUN_LOG = "run.log"
ERRORS_FILE = "errors.jsonl"
REPORT_FILE = "evaluation.json"
TABLE_FILE = "table.txt"
EMBEDDINGS_FILE = "embeddings.txt"
SCORES_FILE = "scores.jsonl"
LOSS_FIGURE = "loss_curves.png"
SCORE_FIGURE = "score_curve.png"
TRANSLATE_CHUNK = 32


@dataclass
class CommandRun:
    """
    What a subcommand body works with: its configuration, output location, manifest and progress action
    """
    command: str
    config: Configurator
    out: Path
    reporter: ManifestReporter
    action: Action

    def seed(self, required: bool = True) -> int | None:
        seed = self.config.get("seed", required=required, converter=int, required_type=int,
                               description="Every random choice derives from --seed.")
        self.reporter.seed = seed
        return seed

    def existing_path(self, key: str, description: str, required: bool = True) -> Path | None:
        value = self.config.get(key, required=required, description=description)
        if value is None:
            return None
        path = Path(value)
        if not path.exists():
            raise ConfigurationError(key, f"{description} {path} does not exist")
        return path


def __size__(value: Any) -> tuple[int, int]:
    size = to_int_tuple(value)
    if len(size) == 1:
        return size[0], size[0]
    if len(size) != 2:
        raise ValueError("size must be H or H,W")
    return size[0], size[1]


def __optional_float__(value: Any) -> float | None:
    if isinstance(value, str) and value.strip().lower() in ("", "none", "default"):
        return None
    return float(value)


def __report_error__(command: str, error: BaseException) -> None:
    print(f"{PROG} {command}: error: {error}", file=sys.stderr)


def __run__(command: str, config: Configurator, body: Callable[[CommandRun], None], unit: str, quiet: bool,
            out_is_file: bool = False, reporting_interval: int = 100) -> int:
    """
    Runs a subcommand body inside the manifest, logging and progress machinery shared by every subcommand
    """
    try:
        out = Path(config.get("out", required=True, description="Output location."))
    except ConfigurationError as e:
        __report_error__(command, e)
        return exit_code_for(e)

    manifest_dir = out.parent if out_is_file else out
    reporter = ManifestReporter(command, manifest_dir, config.resolved(), handle_signals=True)
    reporter.register()
    run_log = RunLoggerFactory.get_logger("facetrans_lib", manifest_dir / RUN_LOG, run_id=reporter.run_id,
                                          log_type=command, stream=False)
    action = Action(command, unit=unit, reporter=reporter, reporting_interval=reporting_interval, quiet=quiet,
                    error_handler=FileBasedErrorHandler(f"{command}-{reporter.run_id}", manifest_dir / ERRORS_FILE))
    run = CommandRun(command, config, out, reporter, action)
    try:
        action.started()
        body(run)
        reporter.config = config.resolved()
        action.finished()
        return EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        reporter.config = config.resolved()
        action.send_exception(e)
        action.aborted(Status.UNSTABLE if code == EXIT_NUMERICAL_INSTABILITY else Status.ERRORING, e)
        run_log.error(f"{command} failed with exit code {code}: {e}")
        __report_error__(command, e)
        return code
    finally:
        reporter.restore_signals()
        RunLoggerFactory.release(run_log)


def __generate_dataset__(run: CommandRun) -> None:
    c = run.config
    seed = run.seed()
    identities = c.get("identities", 100, converter=int)
    expressions = c.get("expressions", ",".join(DEFAULT_EXPRESSIONS), converter=to_name_list)
    size = c.get("size", "64", converter=__size__)
    test_fraction = c.get("test_fraction", 0.2, converter=float)
    per_identity = c.get("expressions_per_identity", converter=int)

    split = generate_dataset(identities, expressions, size, seed, test_fraction, per_identity)
    total = len(split.train_samples()) + len(split.test_samples())
    run.action.expect(total)
    index = save_dataset(split, run.out)
    run.action.record_processed(total)
    run.reporter.add_output("dataset", run.out)
    run.reporter.add_output("index", index)


def cmd_generate_dataset(config: Configurator, quiet: bool = False) -> int:
    return __run__("generate-dataset", config, __generate_dataset__, "images", quiet)


def __mask__(run: CommandRun) -> None:
    c = run.config
    radius = c.get("radius", converter=__optional_float__)
    data = run.existing_path("data", "Dataset directory", required=False)
    if data is not None:
        if data.resolve() == run.out.resolve():
            raise ConfigurationError("out", "Masks are written to a new dataset directory, not into --data")
        overwrite = c.get("overwrite", False, converter=string_to_bool)
        split = load_dataset(data)
        filled = fill_missing_masks(split, radius, overwrite=overwrite)
        run.reporter.add_output("index", save_dataset(filled, run.out))
        run.action.record_processed(len(filled.train_samples()) + len(filled.test_samples()))
        return

    landmark_file = run.existing_path("landmarks", "Landmark file", required=False)
    if landmark_file is None:
        raise ConfigurationError("landmarks", "Either --landmarks or --data is required")
    image = run.existing_path("image", "Image file", required=False)
    size = c.get("size", converter=__size__)
    if size is None and image is not None:
        size = read_png(image).shape[:2]
    if size is None:
        raise ConfigurationError("size", "--size or --image is required to know the mask size")
    try:
        payload = json.loads(landmark_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetFormatError(landmark_file, f"Landmark file is not valid JSON ({e.msg})") from e
    mask = landmarks_to_mask(Landmarks.from_json(payload, landmark_file), size, radius)
    write_mask_png(mask, run.out)
    run.reporter.add_output("mask", run.out)
    run.action.record_processed()


def cmd_mask(config: Configurator, quiet: bool = False) -> int:
    return __run__("mask", config, __mask__, "masks", quiet, out_is_file=config.get("data") is None)


def __classifier_config__(c: Configurator) -> ClassifierConfig:
    defaults = ClassifierConfig()
    return ClassifierConfig(
        steps=c.get("classifier_steps", defaults.steps, converter=int),
        batch_size=c.get("classifier_batch_size", defaults.batch_size, converter=int),
        learning_rate=c.get("classifier_lr", defaults.learning_rate, converter=float),
        validation_fraction=c.get("classifier_validation_fraction", defaults.validation_fraction, converter=float),
        feature_dim=c.get("feature_dim", defaults.feature_dim, converter=int),
    )


def __check_expressions__(expected: Sequence, found: Sequence, what: str) -> None:
    expected_names, found_names = [e.name for e in expected], [e.name for e in found]
    if expected_names != found_names:
        raise InvalidArgumentError(f"{what} was built for expressions {', '.join(found_names)} but the dataset has "
                                   f"{', '.join(expected_names)}")


def __train__(run: CommandRun) -> None:
    c = run.config
    seed = run.seed()
    data = run.existing_path("data", "Dataset directory")
    defaults = LossWeights()
    weights = LossWeights(
        cycle=c.get("lambda1", defaults.cycle, converter=float),
        content=c.get("lambda2", defaults.content, converter=float),
        identity=c.get("lambda3", defaults.identity, converter=float),
        mask=c.get("lambda4", defaults.mask, converter=float),
    )
    arch_defaults = ArchConfig()
    encoder_channels = c.get("encoder_channels", arch_defaults.encoder_channels, converter=to_int_tuple)
    bottleneck_width = c.get("bottleneck_width", arch_defaults.bottleneck_width, converter=int)
    disc_channels = c.get("disc_channels", arch_defaults.disc_channels, converter=to_int_tuple)
    disc_condition = c.get("disc_condition", arch_defaults.disc_condition, choices=DISC_CONDITION_MODES)
    config = TrainConfig(
        seed=seed,
        learning_rate=c.get("lr", 2e-4, converter=float),
        beta1=c.get("beta1", 0.5, converter=float),
        beta2=c.get("beta2", 0.999, converter=float),
        batch_size=c.get("batch_size", 1, converter=int),
        iterations=c.get("iterations", 2000, converter=int),
        weights=weights,
        condition_mode=c.get("condition_mode", "bottleneck", choices=CONDITION_MODES),
        lr_decay=c.get("lr_decay", True, converter=string_to_bool),
        checkpoint_every=c.get("checkpoint_every", 500, converter=int),
        mask_source=c.get("mask_source", "analytic", choices=MASK_SOURCES),
        mask_radius=c.get("mask_radius", converter=__optional_float__),
        background_weight=c.get("mask_background_weight", 0.0, converter=float),
        content_layer=c.get("content_layer", "2,2", converter=to_int_tuple),
        classifier=__classifier_config__(c),
    )
    classifier_path = run.existing_path("classifier", "Classifier checkpoint", required=False)

    split = load_dataset(data)
    config = dataclasses.replace(config, arch=ArchConfig(
        image_size=split.size, num_expressions=split.num_expressions, encoder_channels=encoder_channels,
        bottleneck_width=bottleneck_width, disc_channels=disc_channels, disc_condition=disc_condition))
    feature_extractor = None
    if classifier_path is not None:
        feature_extractor, expressions = load_classifier(classifier_path)
        __check_expressions__(split.expressions, expressions, f"Classifier {classifier_path}")

    run.action.expect(config.iterations)
    result = train(config, split, run.out, feature_extractor, progress=lambda record: run.action.record_processed())
    run.reporter.add_output("metrics", result.metrics_path)
    run.reporter.add_output("checkpoint", result.checkpoint_path)
    if result.classifier_path is not None:
        run.reporter.add_output("classifier", result.classifier_path)


def cmd_train(config: Configurator, quiet: bool = False) -> int:
    return __run__("train", config, __train__, "iterations", quiet)


def __translate__(run: CommandRun) -> None:
    c = run.config
    checkpoint = c.get("checkpoint", required=True, description="Translation checkpoint.")
    target = c.get("target_expression", required=True, description="Expression to translate into.")
    direction = c.get("direction", choices=[d.value for d in Direction])
    in_file, in_dir = c.get("in"), c.get("in_dir")
    if (in_file is None) == (in_dir is None):
        raise ConfigurationError("in", "Exactly one of --in and --in-dir is required")

    model = load_translation_model(checkpoint)
    label = find_expression(model.expressions, target)
    direction = Direction(direction) if direction is not None else None
    expected = tuple(model.arch.image_size)

    def checked(path: Path):
        image = read_png(path)
        if image.shape[:2] != expected:
            raise InvalidArgumentError(f"Image {path} is {image.shape[0]}×{image.shape[1]}, the checkpoint translates "
                                       f"{expected[0]}×{expected[1]} images")
        return image

    if in_file is not None:
        write_png(translate(model, checked(Path(in_file)), label, direction), run.out)
        run.reporter.add_output("image", run.out)
        run.action.record_processed()
        return

    source = Path(in_dir)
    if source.resolve() == run.out.resolve():
        raise ConfigurationError("out", "Translations are written to a new directory, not into --in-dir")
    files = sorted(source.glob("*.png"))
    if not files:
        raise InvalidArgumentError(f"No PNG images in {source}")
    run.action.expect(len(files))
    for start in range(0, len(files), TRANSLATE_CHUNK):
        chunk = files[start:start + TRANSLATE_CHUNK]
        outputs = translate(model, [checked(p) for p in chunk], label, direction)
        for path, image in zip(chunk, outputs):
            write_png(image, run.out / f"{path.stem}_{label.name}.png")
        run.action.record_processed(len(chunk))
    run.reporter.add_output("images", run.out)


def cmd_translate(config: Configurator, quiet: bool = False) -> int:
    return __run__("translate", config, __translate__, "images", quiet, out_is_file=config.get("in_dir") is None)


def __latest_checkpoint__(run_dir: Path) -> Path:
    paths = sorted((run_dir / CHECKPOINT_DIR).glob("ckpt_*.npz"))
    if not paths:
        raise ConfigurationError("run", f"Run directory {run_dir} holds no checkpoints")
    return paths[-1]


def __evaluate__(run: CommandRun) -> None:
    c = run.config
    seed = run.seed()
    data = run.existing_path("data", "Dataset directory")
    run_dir = run.existing_path("run", "Training run directory", required=False)
    checkpoint = run.existing_path("checkpoint", "Translation checkpoint", required=False)
    if run_dir is None and checkpoint is None:
        raise ConfigurationError("checkpoint", "Either --run or --checkpoint is required")
    compare = run.existing_path("compare_checkpoint", "Comparison checkpoint", required=False)
    compare_method = c.get("compare_method", "unconditioned")
    classifier_path = run.existing_path("classifier", "Classifier checkpoint", required=False)
    classifier_config = __classifier_config__(c)
    score_curve = c.get("score_curve", False, converter=string_to_bool)
    with_embeddings = c.get("export_embeddings", True, converter=string_to_bool)
    if score_curve and run_dir is None:
        raise ConfigurationError("run", "--score-curve needs the training run directory in --run")

    split = load_dataset(data)
    model = load_translation_model(checkpoint or __latest_checkpoint__(run_dir))
    __check_expressions__(split.expressions, model.expressions, f"Checkpoint {model.path}")
    if classifier_path is not None:
        classifier, expressions = load_classifier(classifier_path)
        __check_expressions__(split.expressions, expressions, f"Classifier {classifier_path}")
    else:
        classifier = train_classifier(split.train_samples(), split.num_expressions, classifier_config, seed)
    run.action.record_processed()

    real_train, real_test = split.train_samples(), split.test_samples()
    translated_test = generate_translations(model, real_test)
    method = "unconditioned" if model.condition_mode == "none" else "conditioned"
    report = augmentation_experiment(real_train, generate_translations(model, real_train), real_test,
                                     translated_test, split.num_expressions, classifier_config, seed, method=method,
                                     baseline=classifier)
    run.action.record_processed()
    if compare is not None:
        other = load_translation_model(compare)
        __check_expressions__(split.expressions, other.expressions, f"Checkpoint {compare}")
        report = merge_reports(report, augmentation_experiment(
            real_train, generate_translations(other, real_train), real_test, generate_translations(other, real_test),
            split.num_expressions, classifier_config, seed, method=compare_method, baseline=classifier,
            include_baseline=False))
        run.action.record_processed()

    # X→Y outputs are the ones conditioned on a non-neutral target
    from_neutral = [s for s in translated_test if s.label.index != 0]
    results: dict[str, Any] = {
        "checkpoint": str(model.path), "iteration": model.iteration, "seed": seed,
        "augmentation": report.to_json(),
        "vgg_score": vgg_score(classifier, from_neutral).to_json(),
        "conditioning_effect": conditioning_effect(model, split.test_x, classifier),
    }
    run.action.record_processed()

    if with_embeddings:
        embeddings = export_embeddings(classifier, translated_test, run.out / EMBEDDINGS_FILE)
        features, labels = load_embeddings(embeddings)
        results["silhouette"] = silhouette(features, labels)
        results["shuffled_silhouette"] = shuffled_silhouette(features, labels, seed)
        run.reporter.add_output("embeddings", embeddings)
        run.action.record_processed()

    if score_curve:
        with JsonLinesSink(run.out / SCORES_FILE) as sink:
            for iteration, score in score_checkpoints(run_dir, classifier, split.test_x,
                                                      progress=lambda i: run.action.record_processed()):
                sink.send({"type": "score", "iteration": iteration, **score.to_json()})
        run.reporter.add_output("scores", run.out / SCORES_FILE)

    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / REPORT_FILE).write_text(Serializers.to_pretty_json(results) + "\n", encoding="utf-8")
    (run.out / TABLE_FILE).write_text(report.to_table() + "\n", encoding="utf-8")
    run.reporter.add_output("report", run.out / REPORT_FILE)
    run.reporter.add_output("table", run.out / TABLE_FILE)
    for line in report.to_table().splitlines():
        run.action.print_coloured(line)
    run.action.print_coloured(f"Conditioning effect {results['conditioning_effect']:.4f}, conditioned class "
                              f"probability {results['vgg_score']['mean_conditioned_probability']:.4f}")


def cmd_evaluate(config: Configurator, quiet: bool = False) -> int:
    return __run__("evaluate", config, __evaluate__, "steps", quiet, reporting_interval=1)


def __plot__(run: CommandRun) -> None:
    c = run.config
    metrics = run.existing_path("metrics", "Metric log", required=False)
    scores = run.existing_path("scores", "Score file", required=False)
    embeddings = run.existing_path("embeddings", "Embedding table", required=False)
    projection = c.get("projection", "pca", choices=PROJECTIONS)
    seed = run.seed(required=projection == "tsne")
    names = c.get("expressions", converter=to_name_list)
    if metrics is None and scores is None and embeddings is None:
        raise ConfigurationError("metrics", "At least one of --metrics, --scores or --embeddings is required")

    if metrics is not None:
        header, records = read_metric_log(metrics)
        names = names or header.get("expressions")
        run.reporter.add_output("loss_curves", plot_loss_curves(records, run.out / LOSS_FIGURE))
        run.action.record_processed()
    if scores is not None:
        with JsonLinesSource(scores) as source:
            points = [(r["iteration"], r["mean_conditioned_probability"]) for r in source.data()
                      if r.get("type") == "score"]
        run.reporter.add_output("score_curve", plot_score_curve(points, run.out / SCORE_FIGURE))
        run.action.record_processed()
    if embeddings is not None:
        features, labels = load_embeddings(embeddings)
        figure = plot_embedding_scatter(features, labels, names or list(DEFAULT_EXPRESSIONS),
                                        run.out / f"embedding_{projection}.png", projection, seed or 0)
        run.reporter.add_output("embedding_scatter", figure)
        run.action.record_processed()


def cmd_plot(config: Configurator, quiet: bool = False) -> int:
    return __run__("plot", config, __plot__, "figures", quiet, reporting_interval=1)


COMMANDS: dict[str, Callable[[Configurator, bool], int]] = {
    "generate-dataset": cmd_generate_dataset,
    "mask": cmd_mask,
    "train": cmd_train,
    "translate": cmd_translate,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def __classifier_flags__(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--classifier-steps", type=int, help="Classifier training steps (default 500)")
    parser.add_argument("--classifier-batch-size", type=int, help="Classifier batch size (default 32)")
    parser.add_argument("--classifier-lr", type=float, help="Classifier learning rate (default 0.001)")
    parser.add_argument("--classifier-validation-fraction", type=float,
                        help="Share of training images held out to validate the classifier (default 0.1)")
    parser.add_argument("--feature-dim", type=int, help="Classifier embedding width (default 128)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings, or the manifest.json of a previous run")
    common.add_argument("--quiet", action="store_true", default=False, help="Suppress console progress output")

    parser = argparse.ArgumentParser(prog=PROG, description="Conditional facial expression translation")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = commands.add_parser("generate-dataset", parents=[common], help="Render a synthetic face dataset")
    p.add_argument("--out", help="Dataset directory to create")
    p.add_argument("--identities", type=int, help="Number of identities (default 100)")
    p.add_argument("--expressions", help="Comma separated expressions, neutral first (default "
                                         f"{','.join(DEFAULT_EXPRESSIONS)})")
    p.add_argument("--size", help="Image size as H or H,W (default 64)")
    p.add_argument("--test-fraction", type=float, help="Share of identities held out for testing (default 0.2)")
    p.add_argument("--expressions-per-identity", type=int, help="Expressions rendered per domain Y identity")
    p.add_argument("--seed", type=int, help="Dataset seed")

    p = commands.add_parser("mask", parents=[common], help="Compute face masks from landmarks")
    p.add_argument("--landmarks", help="Landmark JSON file")
    p.add_argument("--image", help="Image the landmarks belong to, gives the mask size")
    p.add_argument("--size", help="Mask size as H or H,W")
    p.add_argument("--data", help="Dataset directory whose missing masks are filled into a copy at --out")
    p.add_argument("--overwrite", action=argparse.BooleanOptionalAction, default=None,
                   help="Recompute masks that already exist (with --data)")
    p.add_argument("--radius", type=float, help="Dilation radius in pixels (default scales 3 px at 64 px high)")
    p.add_argument("--out", help="Mask PNG, or dataset directory with --data")

    p = commands.add_parser("train", parents=[common], help="Train the translation networks")
    p.add_argument("--data", help="Dataset directory")
    p.add_argument("--out", help="Run directory for checkpoints and the metric log")
    p.add_argument("--seed", type=int, help="Training seed")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 0.0002)")
    p.add_argument("--beta1", type=float, help="Adam beta1 (default 0.5)")
    p.add_argument("--beta2", type=float, help="Adam beta2 (default 0.999)")
    p.add_argument("--batch-size", type=int, help="Batch size (default 1)")
    p.add_argument("--iterations", type=int, help="Training iterations (default 2000)")
    p.add_argument("--lambda1", type=float, help="Cycle consistency weight (default 10)")
    p.add_argument("--lambda2", type=float, help="Content weight (default 1)")
    p.add_argument("--lambda3", type=float, help="Identity weight (default 5)")
    p.add_argument("--lambda4", type=float, help="Face mask weight (default 10)")
    p.add_argument("--condition-mode", choices=CONDITION_MODES, help="Generator conditioning (default bottleneck)")
    p.add_argument("--disc-condition", choices=DISC_CONDITION_MODES, help="Discriminator conditioning (default none)")
    p.add_argument("--lr-decay", action=argparse.BooleanOptionalAction, default=None,
                   help="Decay the learning rate linearly over the second half (default on)")
    p.add_argument("--checkpoint-every", type=int, help="Iterations between checkpoints (default 500)")
    p.add_argument("--mask-source", choices=MASK_SOURCES, help="Face masks from the dataset or from landmarks")
    p.add_argument("--mask-radius", help="Dilation radius for landmark masks")
    p.add_argument("--mask-background-weight", type=float, help="Mask loss weight of background pixels (default 0)")
    p.add_argument("--content-layer", help="Classifier layer for the content loss as STAGE,CONV (default 2,2)")
    p.add_argument("--encoder-channels", help="Generator encoder widths (default 32,64)")
    p.add_argument("--bottleneck-width", type=int, help="Generator bottleneck width (default 256)")
    p.add_argument("--disc-channels", help="Discriminator widths (default 64,128,256)")
    p.add_argument("--classifier", help="Pretrained classifier checkpoint for the content loss")
    __classifier_flags__(p)

    p = commands.add_parser("translate", parents=[common], help="Translate faces into a target expression")
    p.add_argument("--checkpoint", help="Translation checkpoint")
    p.add_argument("--in", help="Input PNG")
    p.add_argument("--in-dir", help="Directory of input PNGs")
    p.add_argument("--target-expression", help="Target expression name")
    p.add_argument("--direction", choices=[d.value for d in Direction], help="Generator to use, inferred by default")
    p.add_argument("--out", help="Output PNG, or output directory with --in-dir")

    p = commands.add_parser("evaluate", parents=[common], help="Score a trained checkpoint")
    p.add_argument("--data", help="Dataset directory")
    p.add_argument("--run", help="Training run directory, its latest checkpoint is evaluated")
    p.add_argument("--checkpoint", help="Explicit translation checkpoint")
    p.add_argument("--compare-checkpoint", help="Second checkpoint whose rows are added to the table")
    p.add_argument("--compare-method", help="Method name of the comparison rows (default unconditioned)")
    p.add_argument("--classifier", help="Classifier checkpoint, trained on the dataset when absent")
    p.add_argument("--score-curve", action=argparse.BooleanOptionalAction, default=None,
                   help="Score every checkpoint of --run")
    p.add_argument("--export-embeddings", action=argparse.BooleanOptionalAction, default=None,
                   help="Write classifier embeddings of translated test images (default on)")
    p.add_argument("--out", help="Directory for the report, table and embeddings")
    p.add_argument("--seed", type=int, help="Classifier seed")
    __classifier_flags__(p)

    p = commands.add_parser("plot", parents=[common], help="Render figures from logs and reports")
    p.add_argument("--metrics", help="Metric log of a training run")
    p.add_argument("--scores", help="Score file written by evaluate --score-curve")
    p.add_argument("--embeddings", help="Embedding table written by evaluate")
    p.add_argument("--expressions", help="Expression names for the legend")
    p.add_argument("--projection", choices=PROJECTIONS, help="Embedding projection (default pca)")
    p.add_argument("--seed", type=int, help="Seed of the t-SNE projection")
    p.add_argument("--out", help="Figure directory")
    return parser


def __config_source__(command: str, path: str) -> ConfigSource:
    source = JsonFileSource(path)
    if source.get("format") != MANIFEST_FORMAT:
        return source
    if source.get("command") != command:
        raise ConfigurationError("config", f"Manifest {path} records a {source.get('command')} run, not {command}")
    return DictionarySource(source.get("config") or {}, name=f"Manifest {path}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE_ERROR
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE_ERROR

    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "quiet")}
    try:
        file_source = __config_source__(args.command, args.config) if args.config else None
    except FacetransError as e:
        __report_error__(args.command, e)
        return EXIT_USAGE_ERROR
    source = LayeredSource(DictionarySource(flags, "Command line flags"), file_source, EnvironmentSource())
    return COMMANDS[args.command](Configurator(source, exit_code=EXIT_USAGE_ERROR), args.quiet)
