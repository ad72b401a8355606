"""Model checkpoints: torch.save of the state dict with config and schema echo."""

import logging
import os
from pathlib import Path

import torch

from ..config import TrainConfig
from ..data.types import ConceptSchema
from ..errors import SchemaMismatchError
from ..models import StagedModel, build_model

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_checkpoint(
    path: Path, model: StagedModel, config: TrainConfig, schema: ConceptSchema, num_categories: int
) -> Path:
    """Write the checkpoint atomically so the previous file survives a crash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": config.model.value,
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "schema_hash": schema.schema_hash(),
        "num_concepts": schema.num_concepts,
        "num_categories": num_categories,
        "state_dict": model.state_dict(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path: Path, schema: ConceptSchema | None = None) -> tuple[StagedModel, TrainConfig]:
    """Rebuild the model of a checkpoint.

    Raises SchemaMismatchError when schema is given and differs from the one the
    checkpoint was trained on.
    """
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaMismatchError(f"{path}: unsupported checkpoint format {version}")
    if schema is not None and payload["schema_hash"] != schema.schema_hash():
        raise SchemaMismatchError(f"{path}: checkpoint was trained on a different concept schema")

    config = TrainConfig.model_validate(payload["config"])
    model = build_model(config, payload["num_concepts"], payload["num_categories"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    logger.debug("Loaded %s checkpoint from %s", config.variant, path)
    return model, config


def checkpoint_config(path: Path) -> TrainConfig:
    """The TrainConfig stored in a checkpoint, without building the model."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    return TrainConfig.model_validate(payload["config"])
