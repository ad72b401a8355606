"""Loading screen shown while a benchmark report is read and its runs are checked."""

from pathlib import Path

from textual.app import ComposeResult
from textual.containers import Center, Middle, Vertical
from textual.reactive import reactive
from textual.screen import Screen
from textual.widgets import ProgressBar, Static


class LoadingScreen(Screen):
    """Report path, current step and a per-run progress bar.

    The app's loader worker drives it through set_status and set_progress.
    """

    BINDINGS = [
        ("q", "quit", "Quit"),
    ]

    DEFAULT_CSS = """
    LoadingScreen {
        background: $surface;
    }

    LoadingScreen #loading-box {
        width: 70;
        height: 11;
        padding: 1 4;
        border: round $primary;
        background: $surface-darken-1;
    }

    LoadingScreen #loading-path {
        width: 100%;
        text-style: bold;
        padding-bottom: 1;
    }

    LoadingScreen ProgressBar {
        width: 100%;
    }

    LoadingScreen #loading-status {
        width: 100%;
        color: $text-muted;
        padding-top: 1;
    }
    """

    status: reactive[str] = reactive("")

    def __init__(self, report_path: Path) -> None:
        super().__init__()
        self.report_path = Path(report_path)
        self.runs_checked = 0
        self.runs_total = 0

    def compose(self) -> ComposeResult:
        with Center():
            with Middle():
                with Vertical(id="loading-box"):
                    yield Static(f"Report: {self.report_path}", id="loading-path")
                    yield ProgressBar(total=None, show_eta=False, id="loading-progress")
                    yield Static(self.status or f"Reading {self.report_path.name}", id="loading-status")

    def on_mount(self) -> None:
        if self.runs_total:
            self._show_progress()

    def set_status(self, text: str) -> None:
        self.status = text

    def set_progress(self, checked: int, total: int) -> None:
        """Runs checked so far out of total."""
        self.runs_checked, self.runs_total = checked, total
        if self.is_mounted:
            self._show_progress()

    def _show_progress(self) -> None:
        self.query_one("#loading-progress", ProgressBar).update(total=max(self.runs_total, 1), progress=self.runs_checked)

    def watch_status(self, text: str) -> None:
        if self.is_mounted:
            self.query_one("#loading-status", Static).update(text)

    def action_quit(self) -> None:
        self.app.exit()
