"""Table of benchmark runs."""

from textual.binding import Binding
from textual.message import Message
from textual.widgets import DataTable
from rich.text import Text

from ..harness.records import RunRecord, RunStatus


class RunsTable(DataTable):
    """One row per run: trust score, accuracies and status."""

    BINDINGS = [
        Binding("enter", "select_cursor", "Details", show=True),
        Binding("t", "sort_by_trust", "Sort by trust", show=True),
    ]

    DEFAULT_CSS = """
    RunsTable {
        height: 1fr;
    }

    RunsTable > .datatable--header {
        background: $primary-darken-1;
        text-style: bold;
    }

    RunsTable > .datatable--cursor {
        background: $primary;
    }
    """

    class RunSelected(Message):
        """Posted when the user presses Enter on a run."""

        def __init__(self, variant: str) -> None:
            self.variant = variant
            super().__init__()

    class RunHighlighted(Message):
        """Posted when the cursor moves to another run."""

        def __init__(self, variant: str) -> None:
            self.variant = variant
            super().__init__()

    def __init__(self, **kwargs) -> None:
        super().__init__(cursor_type="row", **kwargs)
        self._runs: list[RunRecord] = []

    def on_mount(self) -> None:
        self.add_columns("Variant", "Trust", "Class acc", "Concept acc", "Localization", "Epochs", "Status")

    def load_runs(self, runs: list[RunRecord]) -> None:
        self.clear()
        self._runs = list(runs)
        for run in self._runs:
            self._add_run_row(run)

    def _add_run_row(self, run: RunRecord) -> None:
        self.add_row(
            Text(run.variant, style="bold"),
            _score(run.trust_score),
            _score(run.class_accuracy),
            _score(run.concept_accuracy),
            run.trust.localization if run.trust else "-",
            str(len(run.epochs)),
            _status(run),
            key=run.variant,
        )

    def current_variant(self) -> str | None:
        if self.cursor_row is None or not 0 <= self.cursor_row < len(self._runs):
            return None
        return self._runs[self.cursor_row].variant

    def on_data_table_row_highlighted(self, event: DataTable.RowHighlighted) -> None:
        if event.row_key is not None and event.row_key.value is not None:
            self.post_message(self.RunHighlighted(event.row_key.value))

    def action_select_cursor(self) -> None:
        variant = self.current_variant()
        if variant is not None:
            self.post_message(self.RunSelected(variant))

    def action_sort_by_trust(self) -> None:
        """Highest trust first; runs without a score go last."""
        self.load_runs(sorted(self._runs, key=lambda r: -1.0 if r.trust_score is None else r.trust_score, reverse=True))


def _score(value: float | None) -> Text:
    if value is None:
        return Text("n/a", style="dim")
    return Text(f"{value:.3f}", justify="right")


def _status(run: RunRecord) -> Text:
    if run.status is RunStatus.FAILED:
        return Text("failed", style="bold red")
    return Text("ok ✓", style="bold green")
