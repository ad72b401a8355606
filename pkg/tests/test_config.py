"""Tests for configuration models, runtime settings and shared utilities."""

import logging

import numpy as np
import pytest
from pydantic import ValidationError
from rich.logging import RichHandler

from cbm_trust import settings
from cbm_trust.config import (
    AlignmentModule,
    BoxSpec,
    GeneratorSpec,
    LossWeights,
    ModelKind,
    PartSpec,
    TrainConfig,
)
from cbm_trust.settings import configure_logging, get_settings
from cbm_trust.utils import Disk, Rect, derive_seed, sha256_bytes


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert (config.epochs, config.warmup_epochs, config.learning_rate) == (18, 5, 1e-4)
        assert (config.num_prototypes, config.top_n, config.cla_levels) == (64, 10, 2)
        assert config.adam_betas == (0.9, 0.999)
        assert config.variant == "proto"

    def test_variant_roundtrip(self):
        config = TrainConfig.from_variant("proto+pa+cla", seed=3)
        assert config.modules == [AlignmentModule.CLA, AlignmentModule.PA]
        assert config.variant == "proto+cla+pa"
        assert config.seed == 3

    def test_duplicate_modules_collapse(self):
        assert TrainConfig(modules=["pa", "pa", "cia"]).variant == "proto+cia+pa"

    def test_warmup_longer_than_training(self):
        with pytest.raises(ValidationError, match="warmup_epochs"):
            TrainConfig(epochs=3, warmup_epochs=4)

    def test_modules_need_prototypes(self):
        with pytest.raises(ValidationError, match="prototype"):
            TrainConfig(model=ModelKind.VANILLA, modules=["cla"])

    def test_top_n_bounded_by_prototypes(self):
        with pytest.raises(ValidationError, match="top_n"):
            TrainConfig(num_prototypes=4, top_n=5)

    def test_unknown_module(self):
        with pytest.raises(ValidationError):
            TrainConfig(modules=["attention"])

    def test_negative_loss_weight(self):
        with pytest.raises(ValidationError):
            LossWeights(pa=-1.0)

    def test_extractor_config(self):
        extractor = TrainConfig(stage_widths=[16, 32], feature_dim=48, seed=4).extractor_config()
        assert extractor.widths == [16, 32, 48]
        assert extractor.deep_stage == 3 and extractor.shallow_stage == 1
        assert extractor.seed == 4


class TestBoxSpec:
    def test_default_box_on_cub_crops(self):
        assert BoxSpec().resolve(224, 224) == (90, 90)

    def test_fraction_scales_with_image(self):
        assert BoxSpec().resolve(96, 96) == (39, 39)

    def test_absolute_size_wins(self):
        assert BoxSpec(box_size=5).resolve(96, 64) == (5, 5)

    def test_box_must_fit(self):
        with pytest.raises(ValueError):
            BoxSpec(box_size=40).resolve(32, 32)


class TestGeneratorSpec:
    def test_concept_count(self):
        assert GeneratorSpec().num_concepts == 12

    def test_too_many_categories(self):
        with pytest.raises(ValidationError, match="combinations"):
            GeneratorSpec(num_categories=100)

    def test_unknown_glyph(self):
        with pytest.raises(ValidationError, match="glyph"):
            PartSpec(name="crest", shape="hexagon", colors=["red"])

    def test_small_images_rejected(self):
        with pytest.raises(ValidationError):
            GeneratorSpec(image_size=8)


class TestSettings:
    def test_reads_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("CBM_TRUST_LOG_LEVEL", "debug")
        monkeypatch.setenv("CBM_TRUST_NUM_THREADS", "2")
        current = get_settings()
        assert current.output_dir == tmp_path / "runs"
        assert current.log_level == "DEBUG"
        assert current.num_threads == 2
        assert get_settings() is current

    def test_configure_logging_installs_one_handler(self, monkeypatch):
        logger = logging.getLogger("cbm_trust")
        monkeypatch.setattr(logger, "handlers", [])
        monkeypatch.setattr(logger, "level", logger.level)
        configure_logging("warning")
        configure_logging("info")
        assert sum(isinstance(h, RichHandler) for h in logger.handlers) == 1
        assert logger.level == logging.INFO

    def test_settings_module_cache_is_reset(self):
        assert settings._settings is None


class TestUtils:
    def test_derive_seed_is_stable(self):
        assert derive_seed(7, "sample", 3) == derive_seed(7, "sample", 3)
        assert derive_seed(7, "sample", 3) != derive_seed(7, "sample", 4)
        assert 0 <= derive_seed(0, "order", 0) < 2**63

    def test_sha256_of_chunks(self):
        assert sha256_bytes(b"ab", b"c") == sha256_bytes(b"abc")

    def test_rect_geometry(self):
        rect = Rect(1, 2, 3, 5)
        assert rect.center == (2.0, 3.5)
        assert rect.contains_point(3, 5) and not rect.contains_point(0, 2)
        assert rect.contains_rect(Rect(1, 2, 2, 3))
        assert rect.pixel_size() == (3, 4)
        assert int(rect.mask(8, 8).sum()) == 12
        assert Rect.point(4, 4).is_degenerate
        assert Rect(0, 0, -1, -1).is_empty

    def test_disk_mask(self):
        mask = Disk(2.0, 2.0, 1.0).mask(5, 5)
        assert int(mask.sum()) == 5
        assert mask[2, 2] and not mask[1, 1]
        np.testing.assert_array_equal(mask, mask.T)
