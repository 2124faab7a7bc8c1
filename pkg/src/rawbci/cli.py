"""Command-line entry point: ``rawbci {gen,train,eval,predict}``.

All run settings live in one JSON RunSpec; flags only name paths.

RunSpec fields (all optional, unknown keys rejected)::

    {
      "format_version": 1,
      "output_dir": "runs/default",
      "synth": {SynthConfig fields},
      "data": {"dataset_dir": "data", "modalities": null, "subjects": null},
      "model": {"hidden_dims", "leaky_slope", "bn_epsilon", "bn_momentum",
                "init_scale", "seed"},
      "train": {TrainConfig fields}
    }

Relative paths resolve against the RunSpec file's directory. ``modalities``
and ``subjects`` filter the dataset manifest; ``null`` keeps everything.

Files written by ``train`` into the output directory: ``model.ckpt``,
``run_history.csv``, ``run_metrics.json`` and ``test_epochs.csv``.
"""

import argparse
import contextlib
import csv
import json
import os
import sys
from dataclasses import dataclass, field

from .data import (
    MODALITIES,
    concat_epoch_sets,
    extract_epochs,
    flatten_epochs,
    fuse_modalities,
    load_recording,
    read_epochs_csv,
    split_stratified,
    write_epochs_csv,
)
from .exceptions import ConfigError, RawBCIError
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .synth import SynthConfig, write_dataset
from .training import TrainConfig, evaluate, export_history, train
from .validation import dataclass_from_dict

RUNSPEC_VERSION = 1
_TOP_LEVEL = ("format_version", "output_dir", "synth", "data", "model", "train")
_MODEL_KEYS = ("hidden_dims", "leaky_slope", "bn_epsilon", "bn_momentum", "init_scale", "seed")


class CliError(Exception):
    pass


@dataclass
class DataSource:
    dataset_dir: str = "data"
    modalities: list = None
    subjects: list = None


@dataclass
class RunSpec:
    base_dir: str
    output_dir: str = "runs/default"
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataSource = field(default_factory=DataSource)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def to_dict(self):
        return {
            "format_version": RUNSPEC_VERSION,
            "output_dir": self.output_dir,
            "synth": self.synth.to_dict(),
            "data": {
                "dataset_dir": self.data.dataset_dir,
                "modalities": self.data.modalities,
                "subjects": self.data.subjects,
            },
            "model": dict(self.model),
            "train": self.train.to_dict(),
        }


def load_runspec(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"config: {path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise CliError(f"config: {path}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(_TOP_LEVEL))
    if unknown:
        raise CliError(f"config: {path}: unknown top-level key '{unknown[0]}'")
    version = raw.get("format_version", RUNSPEC_VERSION)
    if version != RUNSPEC_VERSION:
        raise CliError(f"config: {path}: unsupported format_version {version!r}")
    try:
        model = raw.get("model", {})
        if not isinstance(model, dict):
            raise ConfigError("model", "expected an object")
        bad = sorted(set(model) - set(_MODEL_KEYS))
        if bad:
            raise ConfigError(f"model.{bad[0]}", "unknown field")
        data = dataclass_from_dict(DataSource, raw.get("data", {}), "data")
        for m in data.modalities or []:
            if m not in MODALITIES:
                raise ConfigError("data.modalities", f"unknown modality {m!r}")
        spec = RunSpec(
            base_dir=os.path.dirname(os.path.abspath(path)),
            output_dir=raw.get("output_dir", "runs/default"),
            synth=SynthConfig.from_dict(raw.get("synth", {})),
            data=data,
            model=model,
            train=TrainConfig.from_dict(raw.get("train", {})),
        )
        # surface bad model fields now rather than after loading data
        ModelConfig(input_dim=1, n_classes=len(spec.synth.class_names), **model)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CliError(f"config: {path}: {exc}") from exc
    return spec


@contextlib.contextmanager
def stage(name):
    """Re-raise expected failures as ``CliError`` tagged with the module name."""
    try:
        yield
    except CliError:
        raise
    except (RawBCIError, OSError, ValueError, KeyError) as exc:
        raise CliError(f"{name}: {exc}") from exc


def load_epoch_set(spec):
    """Manifest -> recordings -> epochs -> per-modality sets -> fused set."""
    dataset_dir = spec.resolve(spec.data.dataset_dir)
    manifest_path = os.path.join(dataset_dir, "manifest.json")
    with stage("data-pipeline"):
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        wanted_mods = spec.data.modalities
        wanted_subjects = spec.data.subjects
        per_modality = {}
        for entry in manifest["files"]:
            if wanted_mods is not None and entry["modality"] not in wanted_mods:
                continue
            if wanted_subjects is not None and entry["subject_id"] not in wanted_subjects:
                continue
            rec = load_recording(
                os.path.join(dataset_dir, entry["data"]), os.path.join(dataset_dir, entry["meta"])
            )
            epochs = flatten_epochs(extract_epochs(rec), rec.label_map.names)
            per_modality.setdefault(rec.modality, []).append(epochs)
        if not per_modality:
            raise CliError(f"data-pipeline: no recordings selected from {manifest_path}")
        sets = {m: concat_epoch_sets(s) for m, s in per_modality.items()}
        dims = {m: s.n_features for m, s in sets.items()}
    with stage("data-pipeline (fusion)"):
        fused = fuse_modalities(list(sets.values()))
    return fused, dims


def _model_config(spec, epoch_set):
    return ModelConfig(input_dim=epoch_set.n_features, n_classes=epoch_set.n_classes, **spec.model)


def cmd_gen(config_path, out_dir=None):
    spec = load_runspec(config_path)
    target = out_dir if out_dir is not None else spec.resolve(spec.data.dataset_dir)
    with stage("synthgen"):
        manifest = write_dataset(spec.synth, target)
    print(manifest["path"])
    return 0


def cmd_train(config_path, out_dir=None):
    spec = load_runspec(config_path)
    out = out_dir if out_dir is not None else spec.resolve(spec.output_dir)
    epoch_set, dims = load_epoch_set(spec)
    with stage("data-pipeline (split)"):
        train_set, val_set, test_set = split_stratified(epoch_set, spec.train.split_ratios, spec.train.seed)
    with stage("model"):
        model = build_model(
            _model_config(spec, epoch_set), meta={"class_names": list(epoch_set.class_names)}
        )
    with stage("train-eval"):
        history = train(model, train_set, val_set, spec.train)
        metrics = evaluate(model, test_set)
        os.makedirs(out, exist_ok=True)
        export_history(
            history,
            metrics,
            os.path.join(out, "run"),
            config=spec.to_dict(),
            seed=spec.train.seed,
            extra={
                "feature_dim": epoch_set.n_features,
                "modality_dims": dims,
                "split_sizes": [len(train_set), len(val_set), len(test_set)],
                "model_config": model.config.to_dict(),
            },
        )
        write_epochs_csv(test_set, os.path.join(out, "test_epochs.csv"))
    with stage("model"):
        save_checkpoint(model, os.path.join(out, "model.ckpt"))
    print(f"test accuracy: {metrics.accuracy:.4f} ({metrics.n_samples} epochs)")
    return 0


def _check_dims(model, n_features, source):
    if n_features != model.config.input_dim:
        raise CliError(
            f"feature dimension mismatch: checkpoint expects {model.config.input_dim}, "
            f"{source} has {n_features}"
        )


def cmd_eval(checkpoint_path, config_path, out_dir=None):
    with stage("model"):
        model = load_checkpoint(checkpoint_path)
    spec = load_runspec(config_path)
    epoch_set, _ = load_epoch_set(spec)
    _check_dims(model, epoch_set.n_features, "data")
    with stage("data-pipeline (split)"):
        _, _, test_set = split_stratified(epoch_set, spec.train.split_ratios, spec.train.seed)
    with stage("train-eval"):
        metrics = evaluate(model, test_set)
        out = out_dir if out_dir is not None else spec.resolve(spec.output_dir)
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "eval_metrics.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"metrics": metrics.to_dict(), "checkpoint": os.path.abspath(checkpoint_path)},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"accuracy: {metrics.accuracy:.4f} ({metrics.n_samples} epochs)")
    print("confusion (rows = true, cols = predicted):")
    for row in metrics.confusion:
        print("  " + " ".join(f"{v:4d}" for v in row))
    return 0


def cmd_predict(checkpoint_path, epochs_csv, out_path=None):
    with stage("model"):
        model = load_checkpoint(checkpoint_path)
    with stage("data-pipeline"):
        features, _ = read_epochs_csv(epochs_csv)
    _check_dims(model, features.shape[1], epochs_csv)
    with stage("model"):
        predictions = model.predict(features)
    names = model.meta.get("class_names") or [str(c) for c in range(model.config.n_classes)]
    handle = open(out_path, "w", encoding="utf-8", newline="") if out_path else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["epoch_index", "predicted_class", "class_name"])
        for i, p in enumerate(predictions):
            writer.writerow([i, int(p), names[int(p)]])
    finally:
        if out_path:
            handle.close()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rawbci", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="dataset directory (default: data.dataset_dir)")

    p = sub.add_parser("train", help="train, evaluate on the test split, save artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: output_dir)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the RunSpec's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="RunSpec describing the data and split")
    p.add_argument("--out")

    p = sub.add_parser("predict", help="predict classes for an epoch CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="epoch CSV (optional trailing label column)")
    p.add_argument("--out", help="prediction CSV path (default: stdout)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args.config, args.out)
        if args.command == "train":
            return cmd_train(args.config, args.out)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.data, args.out)
        return cmd_predict(args.checkpoint, args.data, args.out)
    except CliError as exc:
        print(f"rawbci {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
