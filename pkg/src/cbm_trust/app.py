"""Report browser: a Textual app over a saved benchmark report."""

from pathlib import Path

from pydantic import ValidationError
from textual import work
from textual.app import App, ComposeResult
from textual.binding import Binding
from textual.containers import Container, Horizontal
from textual.widgets import Static, Footer

from .harness.records import BenchmarkReport
from .widgets.runs_table import RunsTable
from .widgets.summary_bar import SummaryBar
from .widgets.concept_panel import ConceptPanel
from .screens.loading import LoadingScreen
from .screens.error import ErrorScreen
from .screens.details import DetailsScreen


class ReportApp(App):
    """Browse the runs of a benchmark report."""

    TITLE = "CBM Trust"

    theme = "monokai"

    CSS = """
    Screen {
        background: $surface;
    }

    #app-header {
        dock: top;
        height: 1;
        background: $primary;
        layout: horizontal;
    }

    #app-title {
        width: 1fr;
        padding: 0 1;
        text-style: bold;
    }

    #report-path {
        width: auto;
        padding: 0 1;
    }

    #main-container {
        height: 1fr;
        layout: horizontal;
    }

    #table-container {
        width: 1fr;
    }
    """

    BINDINGS = [
        Binding("r", "reload", "Reload", show=True),
        Binding("x", "quit", "Exit", show=True),
    ]

    def __init__(self, report_path: Path) -> None:
        super().__init__()
        self.report_path = Path(report_path)
        self.report: BenchmarkReport | None = None
        self.missing_checkpoints: list[str] = []
        self._loading: LoadingScreen | None = None

    def compose(self) -> ComposeResult:
        with Horizontal(id="app-header"):
            yield Static("CBM Trust", id="app-title")
            yield Static(str(self.report_path), id="report-path")

        with Container(id="main-container"):
            with Container(id="table-container"):
                yield RunsTable(id="runs-table")
            yield ConceptPanel(id="concept-panel")

        yield SummaryBar(id="summary-bar")
        yield Footer()

    def on_mount(self) -> None:
        self.load_report()

    def load_report(self) -> None:
        self._loading = LoadingScreen(self.report_path)
        self.push_screen(self._loading)
        self._do_load_report()

    @work(thread=True, exclusive=True)
    def _do_load_report(self) -> None:
        """Read and validate the report, then check each run's checkpoint, in a background thread."""
        loading = self._loading
        try:
            report = BenchmarkReport.load(self.report_path)
        except FileNotFoundError as e:
            self.call_from_thread(self._show_error, "Report not found", "No benchmark report at this path", str(e))
            return
        except ValidationError as e:
            self.call_from_thread(self._show_error, "Invalid report", "The report does not validate", str(e))
            return
        missing = []
        for i, run in enumerate(report.runs, 1):
            self.call_from_thread(loading.set_status, f"Checking {run.variant} ({i}/{len(report.runs)})")
            if run.checkpoint and not Path(run.checkpoint).exists():
                missing.append(run.variant)
            self.call_from_thread(loading.set_progress, i, len(report.runs))
        self.call_from_thread(self._show_report, report, missing)

    def _show_report(self, report: BenchmarkReport, missing: list[str]) -> None:
        self.pop_screen()
        self.report = report
        self.missing_checkpoints = missing
        self.notify(f"Loaded {len(report.runs)} runs")
        if missing:
            self.notify(f"Checkpoint missing for {', '.join(missing)}", severity="warning")

        table = self.query_one("#runs-table", RunsTable)
        table.load_runs(report.runs)
        self._update_summary()
        if report.runs:
            self._show_run_panel(report.runs[0].variant)
        table.focus()

    def _show_error(self, title: str, message: str, detail: str) -> None:
        self.pop_screen()
        self.push_screen(ErrorScreen(title, message, detail))

    def _update_summary(self) -> None:
        report = self.report
        scored = [r for r in report.runs if r.trust_score is not None]
        best = max(scored, key=lambda r: r.trust_score, default=None)
        self.query_one("#summary-bar", SummaryBar).update_stats(
            total_runs=len(report.runs),
            failed_runs=len(report.failed),
            best_variant=best.variant if best else "",
            best_trust=best.trust_score if best else 0.0,
        )

    def _show_run_panel(self, variant: str) -> None:
        run = self.report.run(variant)
        drop = self.report.patch_drop.get(variant)
        part_names: dict[int, str] = {}
        for reports in self.report.patch_drop.values():
            part_names.update({g.part_id: g.part_name for g in reports.groups})
        self.query_one("#concept-panel", ConceptPanel).show_run(run, part_names, drop)

    def on_runs_table_run_highlighted(self, event: RunsTable.RunHighlighted) -> None:
        if self.report is not None:
            self._show_run_panel(event.variant)

    def on_runs_table_run_selected(self, event: RunsTable.RunSelected) -> None:
        if self.report is not None:
            self.push_screen(DetailsScreen(self.report.run(event.variant)))

    def action_reload(self) -> None:
        self.load_report()

    def action_quit(self) -> None:
        self.exit()
