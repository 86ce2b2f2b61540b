"""Command-line front end: ``partseg <command> [options]``.

Commands: ``config``, ``synth``, ``train``, ``segment``, ``openended``,
``occlude``, ``recognize`` and ``occlusion``.  Exit codes are 0 on success,
2 for I/O, configuration or data errors and 3 when an object cannot be
recognised.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import abl
from .config import (ConfigError, ExperimentConfig, apply_overrides, format_config, load_config, occlusion_config,
                     synthetic_config)
from .dataset import DatasetError, load_dataset, save_dataset
from .descriptors import DescriptorError, prepare_object
from .localhdp import ModelError, PartRegistry, load_checkpoint, save_checkpoint, train_offline
from .pointcloud import CloudError, PointCloud, format_cloud, load_cloud, occlude
from .protocol import (HdpLearner, OcclusionSettings, ProtocolError, baseline_occlusion_accuracy, recognize,
                       run_occlusion_experiment, run_open_ended, segmentation_labels, write_report)
from .synthetic import make_dataset

log = logging.getLogger("partseg")

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_UNKNOWN = 3

# errors that map to exit code 2
_USER_ERRORS = (OSError, ConfigError, DatasetError, CloudError, DescriptorError, ModelError, ProtocolError,
                abl.ArgumentError)


class CliError(Exception):
    pass


def _detect_format(path: Path) -> str:
    if path.suffix.lower() == ".off":
        return "off"
    try:
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    return "xyz_label" if len(line.split()) == 4 else "xyz"
    except OSError as exc:
        raise CloudError(f"cannot read {path}: {exc}") from exc
    raise CloudError(f"{path}: empty cloud")


def _read_cloud(path, fmt: str = "auto") -> tuple[PointCloud, str]:
    path = Path(path)
    fmt = _detect_format(path) if fmt == "auto" else fmt
    return load_cloud(path, fmt), fmt


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _out_dir(args, config: ExperimentConfig) -> Path:
    out = args.out or config.paths.report_dir
    if not out:
        raise CliError("an output directory is required (--out)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset_path(args, config: ExperimentConfig) -> str:
    path = args.dataset or config.paths.dataset
    if not path:
        raise CliError("a dataset root is required")
    return path


def _load_model(args, config: ExperimentConfig):
    ckpt = args.checkpoint or config.paths.checkpoint
    if not ckpt:
        raise CliError("a checkpoint is required (--checkpoint)")
    registry, descriptor = load_checkpoint(ckpt)
    if descriptor is None:
        descriptor = config.descriptor
    # --spin-only scores spin words alone; a spin-only checkpoint always does
    descriptor = dataclasses.replace(descriptor, spin_only=config.run.spin_only or descriptor.spin_only)
    return registry, descriptor


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_config(args, config: ExperimentConfig) -> int:
    if args.synthetic:
        config = apply_overrides(synthetic_config(), seed=config.run.seed)
    elif args.occlusion:
        config = apply_overrides(occlusion_config(), seed=config.run.seed)
    _emit(format_config(config), args.out)
    return EXIT_OK


def cmd_synth(args, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    clouds = make_dataset(args.per_category, seed=config.run.seed, n_points=args.points)
    written = save_dataset(clouds, out)
    log.info("wrote %d clouds to %s", len(written), out)
    return EXIT_OK


def cmd_train(args, config: ExperimentConfig) -> int:
    clouds = load_dataset(_dataset_path(args, config))
    out = _out_dir(args, config)
    descriptor = config.descriptor_config()
    prepared = [prepare_object(c, descriptor) for c in clouds]
    registry = PartRegistry(config.hdp, descriptor.vocab_size)
    history = train_offline(registry, prepared, epochs=config.run.epochs, seed=config.run.seed)
    for epoch, elbo in enumerate(history, start=1):
        log.info("epoch %d mean ELBO %.6f", epoch, elbo)
    save_checkpoint(registry, out / "model.ckpt", descriptor)
    (out / "train_log.csv").write_text(
        "epoch,mean_elbo\n" + "".join(f"{i},{e!r}\n" for i, e in enumerate(history, start=1)))

    store = abl.ArgumentationModel(max_subset=config.run.max_subset)
    for cloud, prep in zip(clouds, prepared):
        if config.run.oracle_labels:
            labels = prep.keypoints.part_labels
        else:
            labels = segmentation_labels(registry, prep, descriptor)
        abl.train(store, abl.label_set(labels, config.run.min_fraction), cloud.category)
    abl.save_arguments(store, out / "arguments.txt")
    return EXIT_OK


def cmd_segment(args, config: ExperimentConfig) -> int:
    registry, descriptor = _load_model(args, config)
    cloud, _ = _read_cloud(args.input, args.format)
    prepared = prepare_object(cloud, descriptor)
    labels = segmentation_labels(registry, prepared, descriptor)
    _emit(format_cloud(prepared.keypoints, "xyz", labels=[str(x) for x in labels]), args.out)
    return EXIT_OK


def cmd_openended(args, config: ExperimentConfig) -> int:
    clouds = load_dataset(_dataset_path(args, config))
    out = _out_dir(args, config)
    descriptor = config.descriptor_config()
    learner = HdpLearner(PartRegistry(config.hdp, descriptor.vocab_size), descriptor, seed=config.run.seed)
    report = run_open_ended(clouds, config.teacher_config(), learner)
    write_report(report, out)
    log.info("learned %d parts, stop reason %s", report.learned_parts, report.stop_reason)
    return EXIT_OK


def cmd_occlude(args, config: ExperimentConfig) -> int:
    cloud, fmt = _read_cloud(args.input, args.format)
    _emit(format_cloud(occlude(cloud, config.run.seed), fmt), args.out)
    return EXIT_OK


def cmd_recognize(args, config: ExperimentConfig) -> int:
    registry, descriptor = _load_model(args, config)
    arguments = args.arguments or config.paths.arguments
    if not arguments:
        raise CliError("an argument store is required (--arguments)")
    store = abl.load_arguments(arguments)
    cloud, _ = _read_cloud(args.input, args.format)
    try:
        category, explanation, _ = recognize(registry, store, cloud, descriptor, descriptor.spin_only,
                                             config.run.min_fraction)
    except abl.UnknownObject:
        _emit("unknown object\n", args.out)
        return EXIT_UNKNOWN
    _emit(f"{category}\n{abl.explain(explanation)}\n", args.out)
    return EXIT_OK


def cmd_occlusion(args, config: ExperimentConfig) -> int:
    clouds = load_dataset(_dataset_path(args, config))
    out = _out_dir(args, config)
    descriptor = config.descriptor_config()
    registry = PartRegistry(config.hdp, descriptor.vocab_size)
    store = abl.ArgumentationModel(max_subset=config.run.max_subset)
    settings = OcclusionSettings(oracle_labels=config.run.oracle_labels, min_fraction=config.run.min_fraction,
                                 epochs=config.run.epochs, seed=config.run.seed)
    acc_orig, acc_occ = run_occlusion_experiment(clouds, config.run.seed, registry, store, descriptor, settings)
    base_orig, base_occ = baseline_occlusion_accuracy(clouds, config.run.seed)
    pairs = [("acc_original", acc_orig), ("acc_occluded", acc_occ),
             ("baseline_original", base_orig), ("baseline_occluded", base_occ)]
    (out / "occlusion.txt").write_text("".join(f"{k} = {v!r}\n" for k, v in pairs))
    abl.save_arguments(store, out / "arguments.txt")
    return EXIT_OK


COMMANDS = {
    "config": cmd_config,
    "synth": cmd_synth,
    "train": cmd_train,
    "segment": cmd_segment,
    "openended": cmd_openended,
    "occlude": cmd_occlude,
    "recognize": cmd_recognize,
    "occlusion": cmd_occlusion,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--spin-only", action="store_true", default=None,
                        help="use spin-image words only (occluded objects)")
    common.add_argument("--oracle-labels", action="store_true", default=None,
                        help="train the argument store on ground-truth part labels")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="partseg", description="Open-ended part segmentation and recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", parents=[common], help="print a configuration file")
    preset = p.add_mutually_exclusive_group()
    preset.add_argument("--synthetic", action="store_true", help="settings tuned for the synthetic dataset")
    preset.add_argument("--occlusion", action="store_true", help="settings for the synthetic occlusion study")

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    p.add_argument("--per-category", type=int, default=30)
    p.add_argument("--points", type=int, default=512)

    for name, helptext in (("train", "offline training"), ("openended", "simulated-teacher evaluation"),
                           ("occlusion", "occlusion robustness experiment")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("dataset", nargs="?")

    for name, helptext in (("segment", "label the keypoints of a cloud"),
                           ("recognize", "name the category of a cloud"),
                           ("occlude", "rotate and cut a cloud")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("input")
        p.add_argument("--format", default="auto", choices=["auto", "xyz", "xyz_label", "off"])
        if name != "occlude":
            p.add_argument("--checkpoint")
        if name == "recognize":
            p.add_argument("--arguments")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = apply_overrides(config, seed=args.seed, spin_only=args.spin_only,
                                 oracle_labels=args.oracle_labels)
        return COMMANDS[args.command](args, config)
    except abl.UnknownObject:
        print("partseg: unknown object", file=sys.stderr)
        return EXIT_UNKNOWN
    except (CliError, *_USER_ERRORS) as exc:
        print(f"partseg: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
