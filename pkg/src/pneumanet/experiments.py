"""Experiment planner and runner for the four training-set configurations:

    1  originals only
    2  minority class augmented up to the majority count
    3  minority class topped up with generated images instead
    4  both classes brought to a common target using augmentation plus
       generation (the minority's deficit split as evenly as possible,
       augmentation taking the floor half; the majority is augmented only)

Validation and test sets always contain only original records; that guard
is asserted at runtime, not just by construction.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gan as gan_mod
from . import metrics as metrics_mod
from . import modelio, network
from .augment import AugmentationConfig, expand_class
from .data import CLASS_NAMES, ImageRecord, SplitDataset, records_to_arrays
from .metrics import EXPERIMENT_NAMES
from .validation import require

logger = logging.getLogger(__name__)

DEFAULT_TARGET_TOTAL = 5000


@dataclass(frozen=True)
class ClassPlan:
    original: int
    augmented: int
    generated: int

    @property
    def total(self) -> int:
        return self.original + self.augmented + self.generated


@dataclass(frozen=True)
class ExperimentPlan:
    experiment_id: int
    classes: dict[str, ClassPlan]

    @property
    def name(self) -> str:
        return EXPERIMENT_NAMES[self.experiment_id]

    def to_dict(self):
        return {
            "experiment_id": self.experiment_id,
            "name": self.name,
            "classes": {
                label: {"original": p.original, "augmented": p.augmented,
                        "generated": p.generated, "total": p.total}
                for label, p in self.classes.items()
            },
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def plan_experiment(experiment_id: int, class_counts: dict[str, int],
                    target_total: int = DEFAULT_TARGET_TOTAL) -> ExperimentPlan:
    """Per-class original/augmented/generated counts for one configuration."""
    if experiment_id not in (1, 2, 3, 4):
        raise ValueError(f"experiment id must be 1..4, got {experiment_id}")
    require(len(class_counts) > 0, "class_counts must be non-empty")
    for label, count in class_counts.items():
        require(count > 0, f"class {label} must have a positive count, got {count}")

    classes: dict[str, ClassPlan] = {}
    if experiment_id == 1:
        for label, count in class_counts.items():
            classes[label] = ClassPlan(original=count, augmented=0, generated=0)
    elif experiment_id in (2, 3):
        majority = max(class_counts.values())
        for label, count in class_counts.items():
            deficit = majority - count
            classes[label] = ClassPlan(
                original=count,
                augmented=deficit if experiment_id == 2 else 0,
                generated=deficit if experiment_id == 3 else 0,
            )
    else:
        majority = max(class_counts.values())
        for label, count in class_counts.items():
            deficit = max(0, target_total - count)
            if count == majority:
                classes[label] = ClassPlan(original=count, augmented=deficit, generated=0)
            else:
                aug = deficit // 2
                classes[label] = ClassPlan(original=count, augmented=aug,
                                           generated=deficit - aug)
    return ExperimentPlan(experiment_id=experiment_id, classes=classes)


@dataclass
class TrainingConfig:
    """Knobs for one harness run; mirrors the CLI flags and the JSON config."""

    image_size: int = 148
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 5
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    target_total: int = DEFAULT_TARGET_TOTAL
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    gan_latent_dim: int = 100
    gan_iterations: int = 2000
    gan_batch_size: int = 32
    gan_base_channels: int = 64

    def gan_config(self, seed: int) -> gan_mod.GanConfig:
        return gan_mod.GanConfig(
            latent_dim=self.gan_latent_dim,
            image_shape=(self.image_size, self.image_size, 1),
            batch_size=self.gan_batch_size,
            iterations=self.gan_iterations,
            base_channels=self.gan_base_channels,
            seed=seed,
        )


def assert_evaluation_sets_original(split: SplitDataset):
    for name, subset in (("validation", split.val), ("test", split.test)):
        for rec in subset:
            if rec.provenance != "original":
                raise AssertionError(
                    f"{name} set contains non-original record {rec.id!r} "
                    f"(provenance {rec.provenance})"
                )


def compose_training_records(plan: ExperimentPlan, split: SplitDataset,
                             config: TrainingConfig, seed: int,
                             gan_states: dict[str, gan_mod.GanState] | None = None):
    """Materialize the training set for a plan: originals plus augmented and
    generated records per class. Evaluation sets are untouched originals."""
    assert_evaluation_sets_original(split)
    gan_states = gan_states or {}
    by_label = {name: [r for r in split.train if r.label == name] for name in CLASS_NAMES}
    out: list[ImageRecord] = list(split.train)
    for label, class_plan in plan.classes.items():
        members = by_label.get(label, [])
        if class_plan.original != len(members):
            raise ValueError(
                f"plan expects {class_plan.original} original {label} records, "
                f"training split has {len(members)}"
            )
        if class_plan.augmented > 0:
            aug_config = dataclasses.replace(config.augmentation, seed=seed)
            tensors = expand_class([r.tensor for r in members], class_plan.augmented, aug_config)
            out.extend(
                ImageRecord(id=f"{label}/augmented-{i:05d}", label=label,
                            tensor=t, provenance="augmented")
                for i, t in enumerate(tensors)
            )
        if class_plan.generated > 0:
            if label not in gan_states:
                raise ValueError(
                    f"plan needs {class_plan.generated} generated {label} images "
                    f"but no GAN checkpoint is available; run `gan-train` first"
                )
            images = gan_mod.synthesize(class_plan.generated, gan_states[label], seed=seed)
            out.extend(
                ImageRecord(id=f"{label}/generated-{i:05d}", label=label,
                            tensor=t, provenance="generated")
                for i, t in enumerate(images)
            )
    return out


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    report: metrics_mod.MetricsReport
    confusion: metrics_mod.ConfusionMatrix
    history: network.TrainingHistory
    model: network.CnnModel
    artifacts: dict[str, str]


def run_experiment(plan: ExperimentPlan, split: SplitDataset, config: TrainingConfig,
                   seed: int, out_dir=None,
                   gan_states: dict[str, gan_mod.GanState] | None = None) -> ExperimentResult:
    """Compose the training set per plan, train, evaluate on the held-out
    test originals, and (optionally) write the model, history, metrics, and
    plan artifacts into out_dir."""
    train_records = compose_training_records(plan, split, config, seed, gan_states)
    X_train, y_train = records_to_arrays(train_records)
    X_val, y_val = records_to_arrays(split.val)
    X_test, y_test = records_to_arrays(split.test)

    arch = network.default_architecture(config.image_size)
    model = network.build_model(arch, seed=seed)
    stopper = network.EarlyStopping(patience=config.patience)
    history = network.train(
        model, (X_train, y_train), (X_val, y_val),
        epochs=config.epochs, batch_size=config.batch_size,
        early_stop=stopper, seed=seed,
    )
    test_probs = network.evaluate_probs(model, X_test)
    cm = metrics_mod.confusion(test_probs, y_test)
    report = metrics_mod.compute_metrics(cm)

    artifacts: dict[str, str] = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        model_path = out_dir / "model.pnmx"
        modelio.save_cnn_model(model, model_path)
        history.to_csv(out_dir / "history.csv")
        metrics_mod.reports_to_csv({plan.name: report}, out_dir / "metrics.csv")
        plan.write_json(out_dir / "plan.json")
        artifacts = {
            "model": str(model_path),
            "history": str(out_dir / "history.csv"),
            "metrics": str(out_dir / "metrics.csv"),
            "plan": str(out_dir / "plan.json"),
        }
    return ExperimentResult(plan=plan, report=report, confusion=cm,
                            history=history, model=model, artifacts=artifacts)


def train_minority_gan(split: SplitDataset, config: TrainingConfig, seed: int,
                       label: str = "NORMAL") -> gan_mod.GanState:
    """Train the image generator on one class of the training originals."""
    members = [r for r in split.train if r.label == label]
    require(len(members) >= 2, f"need at least 2 {label} training images for the GAN")
    X = np.stack([r.tensor for r in members])
    return gan_mod.train_gan(X, config.gan_config(seed))


def run_sweep(split: SplitDataset, config: TrainingConfig, seed: int, out_dir=None,
              experiments=(1, 2, 3, 4),
              gan_states: dict[str, gan_mod.GanState] | None = None):
    """Run the requested experiments on one split. A single GAN per class is
    trained on demand and reused across experiments; returns
    {experiment name: ExperimentResult}."""
    counts = {
        label: sum(r.label == label for r in split.train) for label in CLASS_NAMES
    }
    plans = [plan_experiment(eid, counts, config.target_total) for eid in experiments]
    gan_states = dict(gan_states or {})
    needed = {
        label
        for plan in plans
        for label, cp in plan.classes.items()
        if cp.generated > 0
    }
    for label in sorted(needed - set(gan_states)):
        logger.info("training %s GAN for the sweep", label)
        gan_states[label] = train_minority_gan(split, config, seed, label)

    results = {}
    for plan in plans:
        exp_dir = None if out_dir is None else Path(out_dir) / f"experiment{plan.experiment_id}"
        results[plan.name] = run_experiment(plan, split, config, seed, exp_dir, gan_states)
    if out_dir is not None:
        reports = {name: res.report for name, res in results.items()}
        metrics_mod.reports_to_csv(reports, Path(out_dir) / "metrics.csv")
        (Path(out_dir) / "report.txt").write_text(metrics_mod.report_table(reports) + "\n")
    return results
