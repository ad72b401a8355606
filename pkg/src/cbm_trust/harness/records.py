"""Pydantic records written by training, benchmarking and the patch-drop experiment."""

from enum import Enum
from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import BaseModel, Field

from ..config import BoxSpec, TrainConfig
from ..metric import TrustReport

TIMINGS_NAME = "timings.csv"


class Stage(str, Enum):
    """Training stage of an epoch."""
    WARMUP = "warmup"
    JOINT = "joint"


class RunStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


class StepRecord(BaseModel):
    """One optimizer step; a line of train_log.jsonl."""

    epoch: int = Field(..., ge=0)
    step: int = Field(..., ge=0)
    stage: Stage
    components: dict[str, float] = Field(default_factory=dict, description="Unweighted loss components")
    total: float


class EpochRecord(BaseModel):
    """Mean loss components over one epoch."""

    epoch: int = Field(..., ge=0)
    stage: Stage
    components: dict[str, float] = Field(default_factory=dict)
    total: float
    steps: int = Field(..., ge=0)


class GroupCenterStats(BaseModel):
    """Mean squared distance between concept centers, within and across part groups."""

    within_group: Optional[float] = None
    across_group: Optional[float] = None
    images: int = 0


class Diagnostics(BaseModel):
    """Alignment diagnostics of a prototype model on the test split."""

    equivariance: dict[str, float] = Field(default_factory=dict, description="Per-cell squared deviation per transform")
    centers: GroupCenterStats = Field(default_factory=GroupCenterStats)


class RunRecord(BaseModel):
    """Everything needed to reproduce and compare one training run."""

    variant: str
    config: TrainConfig
    status: RunStatus = RunStatus.OK
    error: Optional[str] = None
    dataset_fingerprint: Optional[str] = None
    schema_hash: Optional[str] = None
    epochs: list[EpochRecord] = Field(default_factory=list)
    concept_accuracy: Optional[float] = Field(None, description="Test concept accuracy; None without concepts")
    class_accuracy: Optional[float] = None
    train_concept_accuracy: Optional[float] = None
    train_class_accuracy: Optional[float] = None
    trust: Optional[TrustReport] = Field(None, description="None when the model has no concept maps")
    diagnostics: Optional[Diagnostics] = None
    wall_clock_seconds: float = 0.0
    checkpoint: Optional[str] = None

    @property
    def trust_score(self) -> Optional[float]:
        return self.trust.score if self.trust else None

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2))
        return path

    @classmethod
    def load(cls, path: Path) -> "RunRecord":
        return cls.model_validate_json(Path(path).read_text())


class GroupDrop(BaseModel):
    """Concept accuracy of one part group with and without its region dropped."""

    part_id: int
    part_name: str
    concepts: list[int]
    images: int = Field(..., ge=0)
    accuracy: dict[str, float] = Field(default_factory=dict, description="Mode -> accuracy")

    def delta(self, mode: str) -> float:
        """Accuracy lost under mode relative to no drop."""
        return self.accuracy["none"] - self.accuracy[mode]


class PatchDropReport(BaseModel):
    """Per-group and pooled concept accuracy under each drop mode."""

    variant: str
    groups: list[GroupDrop]
    aggregate: dict[str, float] = Field(default_factory=dict, description="Accuracy pooled over all groups")
    seed: int = 0

    def delta(self, mode: str) -> float:
        return self.aggregate["none"] - self.aggregate[mode]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for g in self.groups:
            rows.append({"part_id": g.part_id, "part": g.part_name, "images": g.images, **g.accuracy})
        return pd.DataFrame(rows)


class BenchmarkReport(BaseModel):
    """Comparison of model variants on one dataset."""

    runs: list[RunRecord]
    box: BoxSpec
    dataset_fingerprint: Optional[str] = None
    patch_drop: dict[str, PatchDropReport] = Field(default_factory=dict)

    @property
    def failed(self) -> list[RunRecord]:
        return [r for r in self.runs if r.status is RunStatus.FAILED]

    def run(self, variant: str) -> RunRecord:
        for r in self.runs:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_frame(self) -> pd.DataFrame:
        """One row per run: trust score, accuracies and status."""
        return pd.DataFrame(
            [
                {
                    "variant": r.variant,
                    "status": r.status.value,
                    "trust": r.trust_score,
                    "class_accuracy": r.class_accuracy,
                    "concept_accuracy": r.concept_accuracy,
                    "localization": r.trust.localization if r.trust else None,
                }
                for r in self.runs
            ]
        )

    def save(self, directory: Path) -> Path:
        """Write report.json, results.csv and timings.csv into directory.

        Wall-clock times only go to timings.csv, so report.json and results.csv are
        identical across re-runs with the same seed.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "report.json"
        path.write_text(self.model_dump_json(indent=2, exclude={"runs": {"__all__": {"wall_clock_seconds"}}}))
        self.to_frame().to_csv(directory / "results.csv", index=False)
        pd.DataFrame(
            [{"variant": r.variant, "seconds": r.wall_clock_seconds} for r in self.runs]
        ).to_csv(directory / TIMINGS_NAME, index=False)
        for variant, drop in self.patch_drop.items():
            drop.to_frame().to_csv(directory / f"patch_drop_{variant.replace('+', '_')}.csv", index=False)
        return path

    @classmethod
    def load(cls, path: Path) -> "BenchmarkReport":
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        report = cls.model_validate_json(path.read_text())
        timings = path.parent / TIMINGS_NAME
        if timings.exists():
            seconds = dict(pd.read_csv(timings, float_precision="round_trip").itertuples(index=False, name=None))
            for r in report.runs:
                r.wall_clock_seconds = float(seconds.get(r.variant, 0.0))
        return report
