"""Command-line surface tying the pipeline together.

Subcommands: prepare, augment, gan-train, gan-sample, train, evaluate,
sweep, predict, serve. Flags can also come from a JSON config file
(--config); explicit command-line flags win over file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import gan as gan_mod
from . import metrics as metrics_mod
from . import network
from .augment import AugmentationConfig, expand_class
from .experiments import (
    DEFAULT_TARGET_TOTAL,
    TrainingConfig,
    plan_experiment,
    run_experiment,
    run_sweep,
)
from .modelio import load_cnn_model
from .service import prediction_payload, serve

logger = logging.getLogger(__name__)

CONFIG_KEYS = (
    "data_dir", "out_dir", "seed", "image_size", "experiment",
    "epochs", "batch_size", "learning_rate", "patience", "target_total",
    "gan_iterations", "gan_latent_dim", "gan_batch_size", "gan_base_channels",
    "class_name", "count", "rotation_max_deg", "zoom_low", "zoom_high",
    "shear_max_deg", "hflip_prob", "bind", "model", "static_dir", "checkpoint",
)

DEFAULTS = {
    "seed": 0,
    "image_size": 148,
    "experiment": 1,
    "epochs": 20,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "patience": 5,
    "target_total": DEFAULT_TARGET_TOTAL,
    "gan_iterations": 2000,
    "gan_latent_dim": 100,
    "gan_batch_size": 32,
    "gan_base_channels": 64,
    "class_name": "NORMAL",
    "count": 16,
    "rotation_max_deg": 40.0,
    "zoom_low": 0.8,
    "zoom_high": 1.2,
    "shear_max_deg": 10.0,
    "hflip_prob": 0.5,
    "bind": "127.0.0.1:8000",
}


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data-dir", dest="data_dir", help="dataset root with NORMAL/ and PNEUMONIA/")
    parser.add_argument("--out-dir", dest="out_dir", help="directory for artifacts")
    parser.add_argument("--seed", type=int, dest="seed")
    parser.add_argument("--config", dest="config", help="JSON config mirroring these flags")
    parser.add_argument("--image-size", type=int, dest="image_size")
    parser.add_argument("--experiment", type=int, choices=(1, 2, 3, 4), dest="experiment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pneumanet",
                                     description="chest X-ray pneumonia classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest a dataset tree into a preprocessed cache")
    _common_flags(p)

    p = sub.add_parser("augment", help="write augmented PNGs mirroring the input layout")
    _common_flags(p)
    p.add_argument("--count", type=int, help="extra images per class")
    p.add_argument("--rotation-max-deg", type=float, dest="rotation_max_deg")
    p.add_argument("--shear-max-deg", type=float, dest="shear_max_deg")
    p.add_argument("--hflip-prob", type=float, dest="hflip_prob")

    p = sub.add_parser("gan-train", help="train the synthetic-image generator on one class")
    _common_flags(p)
    p.add_argument("--class-name", dest="class_name", choices=data_mod.CLASS_NAMES)
    p.add_argument("--gan-iterations", type=int, dest="gan_iterations")
    p.add_argument("--gan-latent-dim", type=int, dest="gan_latent_dim")
    p.add_argument("--gan-batch-size", type=int, dest="gan_batch_size")
    p.add_argument("--gan-base-channels", type=int, dest="gan_base_channels")

    p = sub.add_parser("gan-sample", help="write synthesized PNGs from a GAN checkpoint")
    _common_flags(p)
    p.add_argument("--checkpoint", help="GAN checkpoint path (default <out-dir>/gan_<class>.pnmx)")
    p.add_argument("--class-name", dest="class_name", choices=data_mod.CLASS_NAMES)
    p.add_argument("--count", type=int)

    p = sub.add_parser("train", help="train one experiment configuration")
    _common_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--patience", type=int)
    p.add_argument("--target-total", type=int, dest="target_total")
    p.add_argument("--gan-checkpoint", dest="checkpoint",
                   help="GAN checkpoint for experiments that generate images")
    p.add_argument("--gan-iterations", type=int, dest="gan_iterations")
    p.add_argument("--gan-latent-dim", type=int, dest="gan_latent_dim")
    p.add_argument("--gan-batch-size", type=int, dest="gan_batch_size")
    p.add_argument("--gan-base-channels", type=int, dest="gan_base_channels")

    p = sub.add_parser("evaluate", help="evaluate a model checkpoint on the test split")
    _common_flags(p)
    p.add_argument("--model", help="model checkpoint path")

    p = sub.add_parser("sweep", help="run experiments 1-4 and compare")
    _common_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--patience", type=int)
    p.add_argument("--target-total", type=int, dest="target_total")
    p.add_argument("--gan-iterations", type=int, dest="gan_iterations")
    p.add_argument("--gan-latent-dim", type=int, dest="gan_latent_dim")
    p.add_argument("--gan-batch-size", type=int, dest="gan_batch_size")
    p.add_argument("--gan-base-channels", type=int, dest="gan_base_channels")

    p = sub.add_parser("predict", help="classify one image file")
    _common_flags(p)
    p.add_argument("image", help="path to a JPEG or PNG chest X-ray")
    p.add_argument("--model", help="model checkpoint path")

    p = sub.add_parser("serve", help="run the HTTP inference service")
    _common_flags(p)
    p.add_argument("--model", help="model checkpoint path")
    p.add_argument("--bind", help="host:port to listen on")
    p.add_argument("--static-dir", dest="static_dir", help="directory with the web UI assets")

    return parser


class Settings:
    """Flag resolution: command line beats the config file beats defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.file_values = {}
        config_path = self.args.get("config")
        if config_path:
            with open(config_path) as fh:
                loaded = json.load(fh)
            unknown = set(loaded) - set(CONFIG_KEYS)
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            self.file_values = loaded

    def get(self, key, default=None):
        value = self.args.get(key)
        if value is not None:
            return value
        if key in self.file_values:
            return self.file_values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        return default

    def require(self, key):
        value = self.get(key)
        if value is None:
            raise ValueError(f"--{key.replace('_', '-')} is required (flag or config file)")
        return value

    def augmentation_config(self) -> AugmentationConfig:
        return AugmentationConfig(
            rotation_max_deg=float(self.get("rotation_max_deg")),
            zoom_range=(float(self.get("zoom_low")), float(self.get("zoom_high"))),
            shear_max_deg=float(self.get("shear_max_deg")),
            hflip_prob=float(self.get("hflip_prob")),
            seed=int(self.get("seed")),
        )

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            image_size=int(self.get("image_size")),
            epochs=int(self.get("epochs")),
            batch_size=int(self.get("batch_size")),
            learning_rate=float(self.get("learning_rate")),
            patience=int(self.get("patience")),
            target_total=int(self.get("target_total")),
            augmentation=self.augmentation_config(),
            gan_latent_dim=int(self.get("gan_latent_dim")),
            gan_iterations=int(self.get("gan_iterations")),
            gan_batch_size=int(self.get("gan_batch_size")),
            gan_base_channels=int(self.get("gan_base_channels")),
        )

    def out_dir(self) -> Path:
        out = Path(self.require("out_dir"))
        out.mkdir(parents=True, exist_ok=True)
        return out


def cmd_prepare(s: Settings) -> int:
    records = data_mod.load_directory(s.require("data_dir"), int(s.get("image_size")))
    out = s.out_dir()
    data_mod.write_cache(records, out / "cache.bin", out / "cache_index.json")
    print(f"cached {len(records)} records to {out / 'cache.bin'}")
    return 0


def cmd_augment(s: Settings) -> int:
    image_size = int(s.get("image_size"))
    records = data_mod.load_directory(s.require("data_dir"), image_size)
    out = s.out_dir()
    config = s.augmentation_config()
    count = int(s.get("count"))
    for class_name in data_mod.CLASS_NAMES:
        members = [r for r in records if r.label == class_name]
        class_dir = out / class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        images = expand_class([r.tensor for r in members], count, config)
        for i, tensor in enumerate(images):
            stem = Path(members[i % len(members)].id).stem
            data_mod.save_png(tensor, class_dir / f"{stem}_aug{i:04d}.png")
        print(f"wrote {count} augmented images for {class_name}")
    return 0


def cmd_gan_train(s: Settings) -> int:
    image_size = int(s.get("image_size"))
    class_name = s.get("class_name")
    records = data_mod.load_directory(s.require("data_dir"), image_size)
    members = [r.tensor for r in records if r.label == class_name]
    if len(members) < 2:
        raise ValueError(f"need at least 2 {class_name} images to train the GAN")
    config = s.training_config().gan_config(int(s.get("seed")))
    state = gan_mod.train_gan(np.stack(members), config)
    out = s.out_dir()
    path = out / f"gan_{class_name}.pnmx"
    gan_mod.save_gan(state, path)
    print(f"trained GAN on {len(members)} {class_name} images; checkpoint {path}")
    return 0


def cmd_gan_sample(s: Settings) -> int:
    class_name = s.get("class_name")
    checkpoint = s.get("checkpoint")
    out = s.out_dir()
    path = Path(checkpoint) if checkpoint else out / f"gan_{class_name}.pnmx"
    state = gan_mod.load_gan(path)
    count = int(s.get("count"))
    images = gan_mod.synthesize(count, state, seed=int(s.get("seed")))
    sample_dir = out / "generated"
    sample_dir.mkdir(parents=True, exist_ok=True)
    for i, tensor in enumerate(images):
        data_mod.save_png(tensor, sample_dir / f"{class_name.lower()}_gen{i:05d}.png")
    print(f"wrote {count} synthesized images to {sample_dir}")
    return 0


def _load_split(s: Settings):
    records = data_mod.load_directory(s.require("data_dir"), int(s.get("image_size")))
    return data_mod.split(records, seed=int(s.get("seed")))


def cmd_train(s: Settings) -> int:
    split = _load_split(s)
    config = s.training_config()
    seed = int(s.get("seed"))
    counts = {name: sum(r.label == name for r in split.train) for name in data_mod.CLASS_NAMES}
    plan = plan_experiment(int(s.get("experiment")), counts, config.target_total)
    gan_states = {}
    checkpoint = s.get("checkpoint")
    if checkpoint:
        gan_states[s.get("class_name")] = gan_mod.load_gan(checkpoint)
    result = run_experiment(plan, split, config, seed, out_dir=s.out_dir(),
                            gan_states=gan_states or None)
    print(metrics_mod.report_table({plan.name: result.report}))
    print(f"artifacts in {s.out_dir()}")
    return 0


def cmd_evaluate(s: Settings) -> int:
    model, version = load_cnn_model(s.require("model"))
    size = model.arch.input_shape[0]
    records = data_mod.load_directory(s.require("data_dir"), size)
    split = data_mod.split(records, seed=int(s.get("seed")))
    X_test, y_test = data_mod.records_to_arrays(split.test)
    probs = network.evaluate_probs(model, X_test)
    cm = metrics_mod.confusion(probs, y_test)
    report = metrics_mod.compute_metrics(cm)
    print(f"model version {version}; test set {len(y_test)} images")
    print(f"confusion: tp={cm.tp} tn={cm.tn} fp={cm.fp} fn={cm.fn}")
    print(metrics_mod.report_table({"Original": report}))
    out = s.get("out_dir")
    if out:
        metrics_mod.reports_to_csv({"Original": report}, Path(out) / "metrics.csv")
    return 0


def cmd_sweep(s: Settings) -> int:
    split = _load_split(s)
    config = s.training_config()
    results = run_sweep(split, config, int(s.get("seed")), out_dir=s.out_dir())
    print(metrics_mod.report_table({name: r.report for name, r in results.items()}))
    print(f"artifacts in {s.out_dir()}")
    return 0


def cmd_predict(s: Settings) -> int:
    model, version = load_cnn_model(s.require("model"))
    size = model.arch.input_shape[0]
    blob = Path(s.args["image"]).read_bytes()
    tensor = data_mod.decode_image_bytes(blob, size)
    raw = network.predict(model, tensor)
    print(json.dumps(prediction_payload(raw, version)))
    return 0


def cmd_serve(s: Settings) -> int:
    serve(s.get("model"), bind=s.get("bind"), static_dir=s.get("static_dir"))
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "augment": cmd_augment,
    "gan-train": cmd_gan_train,
    "gan-sample": cmd_gan_sample,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "predict": cmd_predict,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings(args)
        return COMMANDS[args.command](settings)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
