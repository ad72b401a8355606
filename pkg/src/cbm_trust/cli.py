"""Command-line interface: `cbm-trust <command>`."""

import argparse
import copy
import json
import logging
import sys
from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from . import __version__
from .config import BoxSpec, CamMethod, ContainmentTarget, GeneratorSpec, TrainConfig
from .data import generate_synthetic_dataset, load_cub_annotations, load_dataset, save_dataset, write_attribute_part_map
from .data.io import MANIFEST_NAME
from .data.types import Dataset, Split
from .errors import CBMTrustError, ConfigError
from .settings import configure_logging, get_settings

logger = logging.getLogger(__name__)

console = Console()

LIST_KEYS = {"modules", "stage_widths", "adam_betas"}
NESTED_PREFIXES = ("loss", "generator")


# Config files


def _coerce(key: str, value: str) -> Any:
    value = value.strip()
    if value.startswith(("[", "{")):
        try:
            return json.loads(value)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{key}: invalid JSON value {value!r}") from e
    if key in LIST_KEYS:
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def read_config_file(path: Path) -> dict[str, Any]:
    """Read a TrainConfig as JSON, or as KEY=VALUE lines.

    In KEY=VALUE files keys are TrainConfig field names (case-insensitive); nested
    fields use a prefix, e.g. loss_cla=0.5 or generator_image_size=64. List fields take
    comma-separated values (modules=cla,pa).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e

    data: dict[str, Any] = {}
    for raw_key, raw_value in dotenv_values(path).items():
        if raw_value is None:
            raise ConfigError(f"{path}: key '{raw_key}' has no value")
        key = raw_key.strip().lower()
        for prefix in NESTED_PREFIXES:
            if key.startswith(prefix + "_"):
                sub = key[len(prefix) + 1 :]
                data.setdefault(prefix, {})[sub] = _coerce(sub, raw_value)
                break
        else:
            data[key] = _coerce(key, raw_value)
    return data


def build_train_config(args: argparse.Namespace, defaults: dict[str, Any] | None = None) -> TrainConfig:
    """defaults < config file < command-line flags."""
    data: dict[str, Any] = copy.deepcopy(defaults or {})
    if getattr(args, "config", None):
        from_file = read_config_file(args.config)
        if isinstance(data.get("loss"), dict) and isinstance(from_file.get("loss"), dict):
            from_file["loss"] = {**data["loss"], **from_file["loss"]}
        data.update(from_file)
    if getattr(args, "model", None):
        head, *mods = args.model.lower().split("+")
        data["model"], data["modules"] = head, mods
    flags = {
        "dataset": "dataset",
        "epochs": "epochs",
        "warmup": "warmup_epochs",
        "lr": "learning_rate",
        "prototype_lr": "prototype_learning_rate",
        "batch_size": "batch_size",
        "prototypes": "num_prototypes",
        "feature_dim": "feature_dim",
        "levels": "cla_levels",
        "top_n": "top_n",
        "cam": "cam_method",
        "seed": "seed",
    }
    for attr, field in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            data[field] = value
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration:\n{e}") from e


def build_box(args: argparse.Namespace) -> BoxSpec:
    try:
        return BoxSpec(
            box_fraction=args.box_fraction if args.box_fraction is not None else BoxSpec().box_fraction,
            box_size=args.box_size,
            target=args.target,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid box:\n{e}") from e


def open_dataset(path: Path | None, config: TrainConfig | None = None) -> Dataset:
    """A saved dataset, a CUB-format tree, or the synthetic dataset of config."""
    from .harness import load_training_data

    if path is None:
        return load_training_data(config or TrainConfig())
    path = Path(path)
    if (path / MANIFEST_NAME).exists():
        return load_dataset(path)
    return load_cub_annotations(path, image_size=config.cub_image_size if config else 224)


# Output


def print_run(record) -> None:
    table = Table(title=f"{record.variant} (seed {record.config.seed})")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    table.add_row("Trust score", _fmt(record.trust_score))
    table.add_row("Class accuracy", _fmt(record.class_accuracy))
    table.add_row("Concept accuracy", _fmt(record.concept_accuracy))
    table.add_row("Train concept accuracy", _fmt(record.train_concept_accuracy))
    table.add_row("Epochs", str(len(record.epochs)))
    table.add_row("Seconds", f"{record.wall_clock_seconds:.1f}")
    table.add_row("Checkpoint", record.checkpoint or "-")
    console.print(table)


def print_benchmark(report) -> None:
    table = Table(title="Concept trustworthiness benchmark")
    table.add_column("Variant", style="cyan")
    table.add_column("Trust", justify="right")
    table.add_column("Class acc", justify="right")
    table.add_column("Concept acc", justify="right")
    table.add_column("Localization")
    table.add_column("Status")
    for r in report.runs:
        status = "[green]ok[/]" if r.status.value == "ok" else f"[red]failed[/] {r.error or ''}"
        table.add_row(
            r.variant, _fmt(r.trust_score), _fmt(r.class_accuracy), _fmt(r.concept_accuracy),
            r.trust.localization if r.trust else "-", status,
        )
    console.print(table)
    for variant, drop in report.patch_drop.items():
        console.print(
            f"Patch drop [{variant}]: "
            + ", ".join(f"{mode} {acc:.3f}" for mode, acc in drop.aggregate.items())
        )


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.3f}"


# Commands


def cmd_gen_data(args: argparse.Namespace) -> int:
    data: dict[str, Any] = {}
    if args.config:
        data.update(read_config_file(args.config).get("generator", {}))
    for attr, field in {
        "image_size": "image_size",
        "categories": "num_categories",
        "per_category": "samples_per_category",
        "test_per_category": "test_samples_per_category",
        "seed": "seed",
    }.items():
        value = getattr(args, attr)
        if value is not None:
            data[field] = value
    try:
        spec = GeneratorSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid generator settings:\n{e}") from e
    dataset = generate_synthetic_dataset(spec)
    save_dataset(dataset, args.out)
    console.print(
        f"Wrote {len(dataset)} images ({len(dataset.split(Split.TRAIN))} train) with "
        f"{dataset.schema.num_concepts} concepts and {dataset.num_categories} categories to {args.out}"
    )
    console.print(f"Fingerprint: {dataset.fingerprint()}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .harness import train

    config = build_train_config(args)
    dataset = open_dataset(config.dataset, config)
    record = train(config, dataset, run_dir=args.out, box=build_box(args), progress=True)
    print_run(record)
    return 0


def _load_model(args: argparse.Namespace):
    from .harness.checkpoint import checkpoint_config, load_checkpoint

    config = checkpoint_config(args.checkpoint)
    dataset = open_dataset(args.dataset or config.dataset, config)
    model, config = load_checkpoint(args.checkpoint, schema=dataset.schema)
    return model, config, dataset.split(args.split)


def cmd_eval(args: argparse.Namespace) -> int:
    from .harness import evaluate

    model, config, dataset = _load_model(args)
    concept_acc, class_acc = evaluate(model, dataset)
    console.print(f"{config.variant} on {len(dataset)} {args.split} images: "
                  f"concept accuracy {_fmt(concept_acc)}, class accuracy {_fmt(class_acc)}")
    return 0


def cmd_trust(args: argparse.Namespace) -> int:
    from .metric import localizer_for, save_box_records, trust_score

    model, config, dataset = _load_model(args)
    localizer = localizer_for(model, args.cam or config.cam_method)
    if localizer is None:
        console.print(f"[yellow]{config.variant} has no concept maps; trust score is n/a[/]")
        return 0
    records = [] if args.records else None
    report = trust_score(localizer, dataset, build_box(args), records=records)
    table = Table(title=f"Trust score {report.score:.3f} ({report.localization})")
    for col in ("Concept", "Label", "Images", "Contained", "Rate"):
        table.add_column(col)
    for c in report.concepts:
        table.add_row(str(c.concept_id), c.label, str(c.images), str(c.contained), f"{c.rate:.3f}")
    console.print(table)
    if report.excluded_concepts:
        console.print(f"Excluded concepts (no positive image): {report.excluded_concepts}")
    if args.out:
        report.save(args.out)
    if records is not None:
        save_box_records(records, args.records)
    return 0


def cmd_patch_drop(args: argparse.Namespace) -> int:
    from .harness import patch_drop_experiment

    model, config, dataset = _load_model(args)
    report = patch_drop_experiment(model, dataset, modes=tuple(args.modes), seed=args.seed, variant=config.variant)
    table = Table(title=f"Patch drop: {config.variant}")
    table.add_column("Part")
    table.add_column("Images", justify="right")
    for mode in report.aggregate:
        table.add_column(mode, justify="right")
    for g in report.groups:
        table.add_row(g.part_name, str(g.images), *(f"{g.accuracy[m]:.3f}" for m in report.aggregate))
    table.add_row("all", "", *(f"{a:.3f}" for a in report.aggregate.values()), style="bold")
    console.print(table)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.model_dump_json(indent=2))
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    from .harness import ablation_suite, default_suite, run_benchmark
    from .harness.benchmark import DESK_OVERRIDES

    defaults = {} if args.dataset else DESK_OVERRIDES
    base = build_train_config(args, defaults)
    dataset = open_dataset(base.dataset, base)
    configs = ablation_suite(base) if args.ablation else default_suite(base)
    out = Path(args.out) if args.out else get_settings().output_dir / f"benchmark-seed{base.seed}"
    report = run_benchmark(configs, dataset, box=build_box(args), out_dir=out, patch_drop=not args.no_patch_drop, progress=True)
    print_benchmark(report)
    console.print(f"Report written to {out}")
    return 1 if report.failed else 0


def cmd_report(args: argparse.Namespace) -> int:
    from .harness import BenchmarkReport

    report = BenchmarkReport.load(args.path)
    if args.heatmaps:
        export_heatmaps(report, Path(args.path), args.heatmaps, args.dataset)
    if args.tui:
        from .app import ReportApp

        ReportApp(Path(args.path)).run()
        return 0
    print_benchmark(report)
    return 1 if report.failed else 0


def export_heatmaps(report, path: Path, count: int, dataset_path: Path | None) -> None:
    """Overlay the top concepts' maps of the first count test images for every prototype run."""
    from .attribution import save_heatmap
    from .harness import load_checkpoint
    from .models import PrototypeCBM, explain_prediction

    out_dir = (path if path.is_dir() else path.parent) / "heatmaps"
    for run in report.runs:
        if not run.checkpoint or not Path(run.checkpoint).exists():
            continue
        dataset = open_dataset(dataset_path or run.config.dataset, run.config)
        model, _ = load_checkpoint(Path(run.checkpoint), schema=dataset.schema)
        if not isinstance(model, PrototypeCBM):
            continue
        test = dataset.split(Split.TEST)
        for index, sample in enumerate(test.samples[:count]):
            images, _, _ = test.tensors([index])
            explanation = explain_prediction(model, images[0], sample_id=sample.sample_id)
            for ev in explanation.concepts:
                label = dataset.schema.concepts[ev.concept_id].label.replace("::", "_").replace(" ", "_")
                save_heatmap(
                    ev.localization.values, sample.pixels,
                    out_dir / run.variant.replace("+", "_") / f"{sample.sample_id}_{label}.png",
                )
    console.print(f"Heatmaps written to {out_dir}")


def cmd_cub_part_map(args: argparse.Namespace) -> int:
    path = write_attribute_part_map(args.root)
    console.print(f"Wrote {path}")
    return 0


# Parser


def _add_train_flags(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--config", type=Path, help="JSON or KEY=VALUE TrainConfig file")
    p.add_argument("--seed", type=int, required=seed_required, help="Master seed")
    p.add_argument("--dataset", type=Path, help="Saved dataset or CUB-format directory (default: synthetic)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--warmup", type=int, help="Warm-up epochs")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--prototype-lr", type=float, help="Adam learning rate of the prototype bank")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--prototypes", type=int, help="Number of prototypes M")
    p.add_argument("--feature-dim", type=int, help="Deep feature dimension D")
    p.add_argument("--levels", type=int, help="CLA window levels E")
    p.add_argument("--top-n", type=int, help="Prototypes per concept map N")
    p.add_argument("--cam", choices=[m.value for m in CamMethod], help="Attribution for vanilla CBMs")
    p.add_argument("--out", type=Path, help="Output directory")


def _add_box_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--box-fraction", type=float, help="Box side as a fraction of the image side")
    p.add_argument("--box-size", type=int, help="Absolute box side in pixels")
    p.add_argument("--target", choices=[t.value for t in ContainmentTarget], default=ContainmentTarget.POINT.value)


def _add_checkpoint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, help="Dataset directory (default: the checkpoint's)")
    p.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbm-trust", description="Concept trustworthiness benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Overrides CBM_TRUST_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Generate and save the synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, help="Config file; generator_* keys are used")
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--categories", type=int)
    p.add_argument("--per-category", type=int, help="Training samples per category")
    p.add_argument("--test-per-category", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="Train one model")
    p.add_argument("--model", help="Variant, e.g. vanilla, proto or proto+cla+cia+pa")
    _add_train_flags(p, seed_required=True)
    _add_box_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Concept and class accuracy of a checkpoint")
    _add_checkpoint_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trust", help="Trust score of a checkpoint")
    _add_checkpoint_flags(p)
    _add_box_flags(p)
    p.add_argument("--cam", choices=[m.value for m in CamMethod])
    p.add_argument("--out", type=Path, help="Write the TrustReport JSON here")
    p.add_argument("--records", type=Path, help="Write per-image box records (CSV) here")
    p.set_defaults(func=cmd_trust)

    p = sub.add_parser("patch-drop", help="Concept accuracy with part regions dropped")
    _add_checkpoint_flags(p)
    p.add_argument("--modes", nargs="+", default=["none", "related", "random"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_patch_drop)

    p = sub.add_parser("benchmark", help="Train and compare every variant")
    _add_train_flags(p, seed_required=True)
    _add_box_flags(p)
    p.add_argument("--ablation", action="store_true", help="Every subset of CLA/CIA/PA instead of the default suite")
    p.add_argument("--no-patch-drop", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="Show a benchmark report")
    p.add_argument("path", type=Path, help="Benchmark directory or report.json")
    p.add_argument("--tui", action="store_true", help="Browse the report interactively")
    p.add_argument("--heatmaps", type=int, default=0, metavar="N", help="Export heatmaps for N test images")
    p.add_argument("--dataset", type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("cub-part-map", help="Derive attributes/attribute_part_map.txt for a CUB tree")
    p.add_argument("root", type=Path)
    p.set_defaults(func=cmd_cub_part_map)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except (CBMTrustError, ValidationError) as e:
        console.print(f"[bold red]Error:[/] {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
