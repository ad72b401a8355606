"""Tests for the report browser."""

import asyncio

import pytest
from textual.app import App
from textual.widgets import ProgressBar

from cbm_trust.app import ReportApp
from cbm_trust.config import BoxSpec, TrainConfig
from cbm_trust.harness.records import (
    BenchmarkReport,
    Diagnostics,
    EpochRecord,
    GroupDrop,
    PatchDropReport,
    RunRecord,
    RunStatus,
    Stage,
)
from cbm_trust.metric import ConceptTrust, TrustReport
from cbm_trust.screens import DetailsScreen, ErrorScreen, LoadingScreen
from cbm_trust.widgets import ConceptPanel, RunsTable, SummaryBar


def trust(score_a: float, score_b: float) -> TrustReport:
    return TrustReport(
        score=(score_a + score_b) / 2,
        concepts=[
            ConceptTrust(concept_id=0, label="head::red", part_id=0, images=4, contained=round(4 * score_a), rate=score_a),
            ConceptTrust(concept_id=1, label="wing::blue", part_id=1, images=4, contained=round(4 * score_b), rate=score_b),
        ],
        box=BoxSpec(),
        box_pixels=(13, 13),
        localization="prototype top-2",
        num_images=8,
    )


@pytest.fixture
def report_dir(tmp_path):
    epochs = [
        EpochRecord(epoch=0, stage=Stage.WARMUP, components={"task": 1.4, "concept": 0.7}, total=2.1, steps=3),
        EpochRecord(epoch=1, stage=Stage.JOINT, components={"task": 1.2, "concept": 0.6, "pa": -0.3}, total=1.5, steps=3),
    ]
    report = BenchmarkReport(
        runs=[
            RunRecord(variant="linear-probe", config=TrainConfig.from_variant("linear-probe"), class_accuracy=0.5),
            RunRecord(variant="proto", config=TrainConfig.from_variant("proto"), epochs=epochs, trust=trust(0.5, 0.25)),
            RunRecord(
                variant="proto+pa", config=TrainConfig.from_variant("proto+pa"), epochs=epochs,
                trust=trust(1.0, 0.75), diagnostics=Diagnostics(equivariance={"hflip": 0.25}),
            ),
            RunRecord(
                variant="vanilla", config=TrainConfig.from_variant("vanilla"),
                status=RunStatus.FAILED, error="loss component 'task' is not finite",
            ),
        ],
        box=BoxSpec(),
        patch_drop={
            "proto+pa": PatchDropReport(
                variant="proto+pa",
                groups=[
                    GroupDrop(part_id=0, part_name="head", concepts=[0], images=4,
                              accuracy={"none": 0.9, "related": 0.6, "random": 0.85}),
                    GroupDrop(part_id=1, part_name="wing", concepts=[1], images=4,
                              accuracy={"none": 0.8, "related": 0.5, "random": 0.8}),
                ],
                aggregate={"none": 0.85, "related": 0.55, "random": 0.825},
            )
        },
    )
    report.save(tmp_path / "bench")
    return tmp_path / "bench"


async def _settle(app: ReportApp, pilot) -> None:
    await app.workers.wait_for_complete()
    await pilot.pause()


class TestReportApp:
    def test_loads_runs_into_table(self, report_dir):
        async def scenario():
            app = ReportApp(report_dir)
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                table = app.query_one("#runs-table", RunsTable)
                assert table.row_count == 4
                assert table.current_variant() == "linear-probe"
                summary = app.query_one("#summary-bar", SummaryBar)
                assert summary.total_runs == 4
                assert summary.failed_runs == 1
                assert summary.best_variant == "proto+pa"
                assert summary.best_trust == pytest.approx(0.875)

        asyncio.run(scenario())

    def test_sort_by_trust(self, report_dir):
        async def scenario():
            app = ReportApp(report_dir)
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                table = app.query_one("#runs-table", RunsTable)
                table.action_sort_by_trust()
                await pilot.pause()
                assert table.current_variant() == "proto+pa"
                assert [r.variant for r in table._runs][-2:] == ["linear-probe", "vanilla"]

        asyncio.run(scenario())

    def test_enter_opens_details(self, report_dir):
        async def scenario():
            app = ReportApp(report_dir)
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                await pilot.press("down", "enter")
                await pilot.pause()
                assert isinstance(app.screen, DetailsScreen)
                assert app.screen.run.variant == "proto"
                assert app.screen.query("#epochs-table")
                assert app.screen.query("#trust-table")
                await pilot.press("escape")
                await pilot.pause()
                assert not isinstance(app.screen, DetailsScreen)

        asyncio.run(scenario())

    def test_failed_run_details(self, report_dir):
        async def scenario():
            app = ReportApp(report_dir)
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                app.on_runs_table_run_selected(RunsTable.RunSelected("vanilla"))
                await pilot.pause()
                assert isinstance(app.screen, DetailsScreen)
                assert app.screen.query("#run-error")
                assert not app.screen.query("#trust-table")

        asyncio.run(scenario())

    def test_panel_follows_highlight(self, report_dir):
        async def scenario():
            app = ReportApp(report_dir)
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                await pilot.press("down", "down")
                await pilot.pause()
                panel = app.query_one("#concept-panel", ConceptPanel)
                assert panel.current_variant == "proto+pa"
                await pilot.press("up")
                await pilot.pause()
                assert panel.current_variant == "proto"

        asyncio.run(scenario())

    def test_missing_report_shows_error(self, tmp_path):
        async def scenario():
            app = ReportApp(tmp_path / "nowhere")
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                assert isinstance(app.screen, ErrorScreen)
                assert app.screen.error_title == "Report not found"
                assert app.report is None

        asyncio.run(scenario())

    def test_invalid_report_shows_error(self, tmp_path):
        (tmp_path / "report.json").write_text('{"runs": "nope"}')

        async def scenario():
            app = ReportApp(tmp_path)
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                assert isinstance(app.screen, ErrorScreen)
                assert app.screen.error_title == "Invalid report"

        asyncio.run(scenario())

    def test_missing_checkpoint_is_flagged(self, tmp_path):
        present = tmp_path / "proto.pt"
        present.write_bytes(b"")
        runs = [
            RunRecord(variant="proto", config=TrainConfig.from_variant("proto"), checkpoint=str(present)),
            RunRecord(variant="vanilla", config=TrainConfig.from_variant("vanilla"), checkpoint=str(tmp_path / "gone.pt")),
            RunRecord(variant="linear-probe", config=TrainConfig.from_variant("linear-probe")),
        ]
        BenchmarkReport(runs=runs, box=BoxSpec()).save(tmp_path / "bench")

        async def scenario():
            app = ReportApp(tmp_path / "bench")
            async with app.run_test() as pilot:
                await _settle(app, pilot)
                assert app.missing_checkpoints == ["vanilla"]
                assert app._loading.runs_checked == app._loading.runs_total == 3

        asyncio.run(scenario())


class LoadingHost(App):
    def __init__(self, report_path) -> None:
        super().__init__()
        self.loading = LoadingScreen(report_path)

    def on_mount(self) -> None:
        self.push_screen(self.loading)


class TestLoadingScreen:
    def test_progress_and_status(self, tmp_path):
        async def scenario():
            app = LoadingHost(tmp_path / "bench")
            async with app.run_test() as pilot:
                await pilot.pause()
                screen = app.loading
                assert screen.status == ""
                assert str(screen.report_path) == str(tmp_path / "bench")
                screen.set_status("Checking proto (2/5)")
                screen.set_progress(2, 5)
                await pilot.pause()
                assert screen.status == "Checking proto (2/5)"
                bar = screen.query_one("#loading-progress", ProgressBar)
                assert (bar.progress, bar.total) == (2, 5)

        asyncio.run(scenario())

    def test_progress_before_mount_is_applied(self, tmp_path):
        screen = LoadingScreen(tmp_path)
        screen.set_progress(1, 4)
        assert (screen.runs_checked, screen.runs_total) == (1, 4)
