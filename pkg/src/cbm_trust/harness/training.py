"""Training loop with a warm-up stage, evaluation and accuracy scoring."""

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from ..config import AlignmentModule, BoxSpec, TrainConfig
from ..data import generate_synthetic_dataset, load_cub_annotations, load_dataset
from ..data.io import MANIFEST_NAME
from ..data.types import Dataset, Split
from ..errors import EmptyDatasetError, NonFiniteError, SchemaMismatchError, TrainingDivergedError
from ..losses import CIA_TRANSFORMS, cia_loss, cla_loss, concept_loss, pa_loss, task_loss, total_loss
from ..metric import localizer_for, trust_score
from ..models import CBMOutput, PrototypeCBM, StagedModel, build_model
from ..settings import get_settings
from ..utils import derive_seed, seed_everything
from .checkpoint import save_checkpoint
from .diagnostics import equivariance_error, group_center_statistics
from .records import Diagnostics, EpochRecord, RunRecord, Stage, StepRecord

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64
CHECKPOINT_NAME = "checkpoint.pt"
STEP_LOG_NAME = "train_log.jsonl"
RECORD_NAME = "run.json"


def load_training_data(config: TrainConfig) -> Dataset:
    """The dataset a config names: a saved dataset, a CUB-format tree or fresh synthetic data."""
    if config.dataset is None:
        return generate_synthetic_dataset(config.generator)
    root = Path(config.dataset)
    if (root / MANIFEST_NAME).exists():
        return load_dataset(root)
    return load_cub_annotations(root, image_size=config.cub_image_size)


def default_run_dir(config: TrainConfig) -> Path:
    return get_settings().output_dir / config.variant.replace("+", "_") / f"seed{config.seed}"


@torch.no_grad()
def predict(model: StagedModel, dataset: Dataset, batch_size: int = EVAL_BATCH_SIZE) -> tuple[torch.Tensor | None, torch.Tensor]:
    """Concept probabilities (None for the linear probe) and class logits for every sample."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot predict on an empty dataset")
    model.eval()
    probs, logits = [], []
    for start in range(0, len(dataset), batch_size):
        images, _, _ = dataset.tensors(list(range(start, min(start + batch_size, len(dataset)))))
        out = model(images)
        logits.append(out.class_logits)
        if out.concept_probs is not None:
            probs.append(out.concept_probs)
    return (torch.cat(probs) if probs else None), torch.cat(logits)


def score_predictions(
    concept_probs: torch.Tensor | None,
    class_logits: torch.Tensor,
    concept_labels: torch.Tensor,
    categories: torch.Tensor,
) -> tuple[float | None, float]:
    """Concept accuracy (threshold 0.5, mean over concepts and images) and top-1 class accuracy."""
    if class_logits.shape[0] == 0:
        raise EmptyDatasetError("no predictions to score")
    class_acc = float((class_logits.argmax(dim=1) == categories).double().mean())
    if concept_probs is None:
        return None, class_acc
    if concept_probs.shape != concept_labels.shape:
        raise SchemaMismatchError(f"model predicts {concept_probs.shape[1]} concepts, dataset has {concept_labels.shape[1]}")
    concept_acc = float(((concept_probs > 0.5) == concept_labels.bool()).double().mean())
    return concept_acc, class_acc


def evaluate(model: StagedModel, dataset: Dataset, batch_size: int = EVAL_BATCH_SIZE) -> tuple[float | None, float]:
    """(concept accuracy, class accuracy) of model on dataset."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    probs, logits = predict(model, dataset, batch_size)
    _, labels, categories = dataset.tensors()
    return score_predictions(probs, logits, labels, categories)


def compute_losses(
    model: StagedModel,
    out: CBMOutput,
    images: torch.Tensor,
    concept_labels: torch.Tensor,
    categories: torch.Tensor,
    config: TrainConfig,
    stage: Stage,
    groups: list[list[int]],
    rng: np.random.Generator,
) -> dict[str, torch.Tensor]:
    """Unweighted loss components for one batch.

    CLA and CIA only touch the backbone and run after warm-up; PA also trains the
    prototypes and runs in both stages.
    """
    components = {"task": task_loss(out.class_logits, categories)}
    if out.concept_probs is not None:
        components["concept"] = concept_loss(out.concept_probs, concept_labels)
    if not isinstance(model, PrototypeCBM):
        return components

    modules = set(config.modules)
    if stage is Stage.JOINT and AlignmentModule.CLA in modules:
        components["cla"] = cla_loss(
            out.features.deep, out.features.shallow, config.cla_levels, config.loss.cla_mean_normalize
        )
    if stage is Stage.JOINT and AlignmentModule.CIA in modules:
        aug = CIA_TRANSFORMS[int(rng.integers(len(CIA_TRANSFORMS)))]
        components["cia"] = cia_loss(
            lambda x: model.backbone(x).deep, images, aug,
            original=out.features.deep, mean_normalize=config.loss.cia_mean_normalize,
        )
    if AlignmentModule.PA in modules:
        components["pa"] = pa_loss(
            model.concept_maps(out),
            concept_labels,
            groups,
            margin=config.loss.div_margin,
            hinge=config.loss.div_hinge,
            pair_normalize=config.loss.grp_pair_normalize,
        )
    return components


def parameter_groups(model: StagedModel, config: TrainConfig) -> list[dict]:
    """Adam parameter groups: the prototype bank gets its own rate when one is configured."""
    if isinstance(model, PrototypeCBM) and config.prototype_learning_rate is not None:
        return [
            {"params": list(model.backbone.parameters())},
            {"params": list(model.bank.parameters()), "lr": config.prototype_learning_rate},
        ]
    return [{"params": list(model.parameters())}]


@dataclass
class TrainResult:
    model: StagedModel
    record: RunRecord
    run_dir: Path


def fit(
    config: TrainConfig,
    dataset: Dataset | None = None,
    run_dir: Path | None = None,
    box: BoxSpec | None = None,
    progress: bool = False,
) -> TrainResult:
    """Train config on the dataset's train split and evaluate on its test split.

    The run is deterministic in (config, dataset): batch order and augmentation draws
    come from seeds derived from config.seed. A checkpoint is written before the first
    epoch and after every epoch.
    """
    started = time.perf_counter()
    dataset = dataset if dataset is not None else load_training_data(config)
    run_dir = Path(run_dir) if run_dir is not None else default_run_dir(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    train_set, test_set = dataset.split(Split.TRAIN), dataset.split(Split.TEST)
    if len(train_set) == 0:
        raise EmptyDatasetError("the dataset has no training samples")

    settings = get_settings()
    if settings.num_threads:
        torch.set_num_threads(settings.num_threads)
    seed_everything(config.seed)

    schema = dataset.schema
    model = build_model(config, schema.num_concepts, dataset.num_categories)
    optimizer = torch.optim.Adam(
        parameter_groups(model, config), lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps
    )
    groups = dataset.groups
    images, concept_labels, categories = train_set.tensors()
    checkpoint = save_checkpoint(run_dir / CHECKPOINT_NAME, model, config, schema, dataset.num_categories)

    logger.info(
        "Training %s: %d train / %d test images, %d concepts, %d categories",
        config.variant, len(train_set), len(test_set), schema.num_concepts, dataset.num_categories,
    )
    history: list[EpochRecord] = []
    with (run_dir / STEP_LOG_NAME).open("w") as log:
        for epoch in tqdm(range(config.epochs), desc=config.variant, disable=not progress, leave=False):
            stage = Stage.WARMUP if epoch < config.warmup_epochs else Stage.JOINT
            model.train()
            if stage is Stage.WARMUP:
                model.warmup()
            else:
                model.joint()

            order = torch.randperm(len(train_set), generator=torch.Generator().manual_seed(derive_seed(config.seed, "order", epoch)))
            rng = np.random.default_rng(derive_seed(config.seed, "augment", epoch))
            sums: dict[str, float] = {}
            total_sum = 0.0
            steps = 0
            for step, batch in enumerate(order.split(config.batch_size)):
                out = model(images[batch])
                components = compute_losses(
                    model, out, images[batch], concept_labels[batch], categories[batch], config, stage, groups, rng
                )
                try:
                    loss = total_loss(components, config.loss)
                except NonFiniteError as e:
                    raise TrainingDivergedError(f"epoch {epoch} step {step}: {e}", checkpoint) from e

                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()

                values = {k: float(v.detach()) for k, v in components.items()}
                record = StepRecord(epoch=epoch, step=step, stage=stage, components=values, total=float(loss.detach()))
                log.write(record.model_dump_json() + "\n")
                for k, v in values.items():
                    sums[k] = sums.get(k, 0.0) + v
                total_sum += record.total
                steps += 1

            history.append(
                EpochRecord(
                    epoch=epoch,
                    stage=stage,
                    components={k: v / steps for k, v in sums.items()},
                    total=total_sum / steps,
                    steps=steps,
                )
            )
            checkpoint = save_checkpoint(run_dir / CHECKPOINT_NAME, model, config, schema, dataset.num_categories)
            logger.info("%s epoch %d/%d [%s] loss %.4f", config.variant, epoch + 1, config.epochs, stage.value, history[-1].total)

    model.joint()
    model.eval()
    train_concept_acc, train_class_acc = evaluate(model, train_set)
    record = RunRecord(
        variant=config.variant,
        config=config,
        dataset_fingerprint=dataset.fingerprint(),
        schema_hash=schema.schema_hash(),
        epochs=history,
        train_concept_accuracy=train_concept_acc,
        train_class_accuracy=train_class_acc,
        checkpoint=str(checkpoint),
    )
    if len(test_set):
        record.concept_accuracy, record.class_accuracy = evaluate(model, test_set)
        localizer = localizer_for(model, config.cam_method)
        if localizer is not None and any(s.present_concepts() for s in test_set):
            record.trust = trust_score(localizer, test_set, box)
        if isinstance(model, PrototypeCBM):
            record.diagnostics = run_diagnostics(model, test_set)

    record.wall_clock_seconds = time.perf_counter() - started
    record.save(run_dir / RECORD_NAME)
    return TrainResult(model=model, record=record, run_dir=run_dir)


def run_diagnostics(model: PrototypeCBM, dataset: Dataset, max_images: int = EVAL_BATCH_SIZE) -> Diagnostics:
    images, _, _ = dataset.tensors(list(range(min(max_images, len(dataset)))))
    return Diagnostics(
        equivariance=equivariance_error(model.backbone, images),
        centers=group_center_statistics(model, dataset),
    )


def train(
    config: TrainConfig,
    dataset: Dataset | None = None,
    run_dir: Path | None = None,
    box: BoxSpec | None = None,
    progress: bool = False,
) -> RunRecord:
    """Train one model and return its RunRecord (also written to <run_dir>/run.json)."""
    return fit(config, dataset, run_dir, box, progress).record
