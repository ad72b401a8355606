"""Tests for the benchmark runner and the patch-drop experiment."""

import pytest

from cbm_trust.config import BoxSpec, GeneratorSpec, TrainConfig
from cbm_trust.data import generate_synthetic_dataset
from cbm_trust.data.types import Dataset, PartAnnotation, Split
from cbm_trust.errors import MissingAnnotationError
from cbm_trust.harness import (
    BenchmarkReport,
    RunRecord,
    RunStatus,
    ablation_suite,
    default_suite,
    evaluate,
    fit,
    patch_drop_experiment,
    run_benchmark,
)
from cbm_trust.harness import benchmark
from cbm_trust.harness.benchmark import DEFAULT_VARIANTS, DESK_LEARNING_RATE, desk_config
from cbm_trust.harness.records import TIMINGS_NAME
from cbm_trust.models import build_model

from conftest import make_sample, two_part_schema


class TestSuites:
    def test_default_suite(self, tiny_config):
        suite = default_suite(tiny_config)
        assert [c.variant for c in suite] == list(DEFAULT_VARIANTS)
        assert all(c.learning_rate == tiny_config.learning_rate for c in suite)
        assert suite[0].modules == []

    def test_ablation_suite_covers_every_subset(self):
        variants = [c.variant for c in ablation_suite()]
        assert variants == [
            "proto", "proto+cla", "proto+cia", "proto+pa",
            "proto+cla+cia", "proto+cla+pa", "proto+cia+pa", "proto+cla+cia+pa",
        ]

    def test_variant_roundtrip(self):
        for config in ablation_suite():
            assert TrainConfig.from_variant(config.variant).variant == config.variant

    def test_desk_learning_rate_is_larger(self):
        assert DESK_LEARNING_RATE > TrainConfig().learning_rate

    def test_desk_config_keeps_default_dataset(self):
        config = desk_config(seed=4)
        assert config.generator == GeneratorSpec()
        assert config.learning_rate == DESK_LEARNING_RATE
        assert config.prototype_learning_rate > config.learning_rate
        assert config.top_n < TrainConfig().top_n
        assert config.loss.cla_mean_normalize and config.loss.cia_mean_normalize
        assert config.seed == 4

    def test_desk_updates_override(self):
        config = desk_config(top_n=5, loss={"pa": 1.0})
        assert config.top_n == 5
        assert config.loss.pa == 1.0
        assert not config.loss.cla_mean_normalize

    def test_full_scale_defaults_untouched(self):
        config = TrainConfig()
        assert config.prototype_learning_rate is None
        assert not config.loss.cla_mean_normalize and not config.loss.cia_mean_normalize
        assert config.loss.pa == 1.0


class TestRunBenchmark:
    def test_runs_every_variant(self, tiny_config, tiny_dataset, tmp_path):
        report = run_benchmark(default_suite(tiny_config), tiny_dataset, out_dir=tmp_path)

        assert [r.variant for r in report.runs] == list(DEFAULT_VARIANTS)
        assert not report.failed
        assert report.run("linear-probe").trust_score is None
        assert report.run("vanilla").trust.localization == "grad-cam++"
        assert report.run("proto").trust.localization == "prototype top-2"
        for variant in DEFAULT_VARIANTS[1:]:
            assert 0.0 <= report.run(variant).trust_score <= 1.0
        assert set(report.patch_drop) == {"proto", "proto+cla+cia+pa"}
        assert report.dataset_fingerprint == tiny_dataset.fingerprint()

        for name in ("report.json", "results.csv", "patch_drop_proto_cla_cia_pa.csv", "vanilla/run.json"):
            assert (tmp_path / name).exists()
        assert BenchmarkReport.load(tmp_path) == report

    def test_failed_run_does_not_stop_the_rest(self, tiny_config, tiny_dataset, tmp_path, monkeypatch):
        def flaky_fit(config, *args, **kwargs):
            if config.variant == "vanilla":
                raise RuntimeError("out of memory")
            return fit(config, *args, **kwargs)

        monkeypatch.setattr(benchmark, "fit", flaky_fit)
        configs = [c for c in default_suite(tiny_config) if c.variant != "proto+cla+cia+pa"]
        report = run_benchmark(configs, tiny_dataset, out_dir=tmp_path, patch_drop=False)

        assert [r.variant for r in report.failed] == ["vanilla"]
        assert report.run("vanilla").status is RunStatus.FAILED
        assert "out of memory" in report.run("vanilla").error
        assert report.run("proto").status is RunStatus.OK
        assert report.patch_drop == {}

    def test_same_seed_same_results(self, tiny_config, tiny_dataset, tmp_path):
        configs = default_suite(tiny_config)[1:3]
        run_benchmark(configs, tiny_dataset, out_dir=tmp_path, patch_drop=False)
        first = {name: (tmp_path / name).read_bytes() for name in ("report.json", "results.csv")}
        run_benchmark(configs, tiny_dataset, out_dir=tmp_path, patch_drop=False)
        for name, content in first.items():
            assert (tmp_path / name).read_bytes() == content

    def test_timings_stay_out_of_the_report(self, tiny_config, tmp_path):
        runs = [RunRecord(variant="proto", config=tiny_config, wall_clock_seconds=12.5)]
        BenchmarkReport(runs=runs, box=BoxSpec()).save(tmp_path)
        assert "wall_clock_seconds" not in (tmp_path / "report.json").read_text()
        assert "seconds" not in (tmp_path / "results.csv").read_text()
        assert (tmp_path / TIMINGS_NAME).exists()
        assert BenchmarkReport.load(tmp_path).run("proto").wall_clock_seconds == 12.5


def full_image_dataset() -> Dataset:
    """Both parts cover the whole 8x8 image."""
    whole = (0.0, 0.0, 7.0, 7.0)
    samples = tuple(
        make_sample(
            f"s{i}", [1, i % 2],
            [
                PartAnnotation(part_id=0, center=(3.5, 3.5), region=whole),
                PartAnnotation(part_id=1, center=(3.5, 3.5), region=whole),
            ],
            fill=40 * (i + 1),
        )
        for i in range(4)
    )
    return Dataset(samples=samples, schema=two_part_schema(), num_categories=2, image_size=8)


def small_model(config: TrainConfig, dataset: Dataset):
    return build_model(config, dataset.schema.num_concepts, dataset.num_categories)


class TestPatchDrop:
    def test_no_drop_matches_concept_accuracy(self, tiny_config, tiny_dataset, tmp_path):
        model = fit(tiny_config, tiny_dataset, run_dir=tmp_path).model
        test = tiny_dataset.split("test")
        report = patch_drop_experiment(model, test, seed=0, variant="proto")
        concept_acc, _ = evaluate(model, test)
        assert report.aggregate["none"] == pytest.approx(concept_acc)
        assert [g.part_name for g in report.groups] == ["head", "wing", "body", "tail"]
        assert set(report.aggregate) == {"none", "related", "random"}
        assert len(report.to_frame()) == 4

    def test_whole_image_drop_is_mode_independent(self, tiny_config):
        dataset = full_image_dataset()
        model = small_model(tiny_config, dataset)
        report = patch_drop_experiment(model, dataset, seed=1)
        for group in report.groups:
            assert group.accuracy["related"] == group.accuracy["random"]
            assert group.images == 4
        assert report.delta("related") == report.delta("random")

    def test_seeded_random_drop(self, tiny_config, tiny_dataset):
        model = small_model(tiny_config, tiny_dataset)
        test = tiny_dataset.split("test")
        a = patch_drop_experiment(model, test, modes=("random",), seed=3)
        b = patch_drop_experiment(model, test, modes=("random",), seed=3)
        assert a == b
        assert set(a.aggregate) == {"none", "random"}

    def test_missing_part_annotation(self, tiny_config):
        sample = make_sample("s", [1, 0], [PartAnnotation.point(0, 2, 2)])
        dataset = Dataset(samples=(sample,), schema=two_part_schema(), num_categories=1, image_size=8)
        with pytest.raises(MissingAnnotationError):
            patch_drop_experiment(small_model(tiny_config, dataset), dataset)

    def test_linear_probe_has_no_concepts(self, tiny_config):
        dataset = full_image_dataset()
        config = TrainConfig.model_validate({**tiny_config.model_dump(), "model": "linear-probe", "modules": []})
        with pytest.raises(TypeError):
            patch_drop_experiment(small_model(config, dataset), dataset)


@pytest.mark.slow
class TestDirectionOfEffect:
    """Default synthetic dataset, desk settings and the shipped seed."""

    VARIANTS = ("vanilla", "proto+cla+cia+pa")

    @pytest.fixture(scope="class")
    def out_dir(self, tmp_path_factory):
        return tmp_path_factory.mktemp("direction")

    @pytest.fixture(scope="class")
    def dataset(self):
        return generate_synthetic_dataset(GeneratorSpec())

    @pytest.fixture(scope="class")
    def configs(self):
        return [c for c in default_suite(desk_config(seed=0)) if c.variant in self.VARIANTS]

    @pytest.fixture(scope="class")
    def report(self, configs, dataset, out_dir):
        return run_benchmark(configs, dataset, out_dir=out_dir)

    def test_dataset_size(self, dataset):
        assert len(dataset.split(Split.TRAIN)) == 400
        assert len(dataset.split(Split.TEST)) == 200

    def test_no_failed_runs(self, report):
        assert report.failed == []

    def test_trust_margin_over_vanilla(self, report):
        aligned = report.run("proto+cla+cia+pa").trust_score
        vanilla = report.run("vanilla").trust_score
        assert aligned >= vanilla + 0.10

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_concept_accuracy(self, report, variant):
        assert report.run(variant).concept_accuracy >= 0.85

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_loss_decreases(self, report, variant):
        epochs = report.run(variant).epochs
        assert len(epochs) == 18
        assert epochs[-1].total < epochs[0].total

    def test_related_drop_hurts_twice_as_much(self, report):
        drop = report.patch_drop["proto+cla+cia+pa"]
        assert drop.delta("related") > 0
        assert drop.delta("related") >= 2 * drop.delta("random")

    def test_rerun_reproduces_every_number(self, report, configs, dataset, out_dir):
        first = {name: (out_dir / name).read_bytes() for name in ("report.json", "results.csv")}
        again = run_benchmark(configs, dataset, out_dir=out_dir)
        for name, content in first.items():
            assert (out_dir / name).read_bytes() == content
        assert again.patch_drop == report.patch_drop
