"""Summary bar with run counts and the best trust score."""

from textual.app import ComposeResult
from textual.containers import Horizontal
from textual.widgets import Static
from textual.widget import Widget
from textual.reactive import reactive
from rich.text import Text


class SummaryBar(Widget):
    """Run counts, failures and the best trust score."""

    DEFAULT_CSS = """
    SummaryBar {
        dock: bottom;
        height: 1;
        padding: 0 1;
        background: $surface-darken-1;
        border-top: solid $primary-darken-2;
    }

    SummaryBar Horizontal {
        height: 1;
    }

    SummaryBar .summary-item {
        width: auto;
        padding: 0 2 0 0;
    }
    """

    total_runs: reactive[int] = reactive(0)
    failed_runs: reactive[int] = reactive(0)
    best_variant: reactive[str] = reactive("")
    best_trust: reactive[float] = reactive(0.0)

    def compose(self) -> ComposeResult:
        with Horizontal():
            yield Static(id="count-summary", classes="summary-item")
            yield Static(id="failed-summary", classes="summary-item")
            yield Static(id="best-summary", classes="summary-item")

    def watch_total_runs(self, count: int) -> None:
        self._update_display()

    def watch_failed_runs(self, count: int) -> None:
        self._update_display()

    def watch_best_trust(self, score: float) -> None:
        self._update_display()

    def _update_display(self) -> None:
        try:
            self.query_one("#count-summary", Static).update(f"{self.total_runs} runs")

            failed = Text()
            failed.append("Failed: ", style="dim")
            failed.append(str(self.failed_runs), style="bold red" if self.failed_runs else "bold green")
            self.query_one("#failed-summary", Static).update(failed)

            best = Text()
            best.append("Best trust: ", style="dim")
            if self.best_variant:
                best.append(f"{self.best_trust:.3f} ({self.best_variant})", style="bold")
            else:
                best.append("n/a", style="dim")
            self.query_one("#best-summary", Static).update(best)
        except Exception:
            pass  # not mounted yet

    def update_stats(self, total_runs: int, failed_runs: int, best_variant: str, best_trust: float) -> None:
        self.total_runs = total_runs
        self.failed_runs = failed_runs
        self.best_variant = best_variant
        self.best_trust = best_trust
