"""Right-side panel with the highlighted run's per-part trust and alignment statistics."""

from textual.app import ComposeResult
from textual.containers import Vertical
from textual.widgets import Static
from textual.widget import Widget
from rich.text import Text

from ..harness.records import PatchDropReport, RunRecord


class ConceptPanel(Widget):
    """Per-part trust rates, patch-drop deltas and diagnostics of one run."""

    DEFAULT_CSS = """
    ConceptPanel {
        width: 36;
        height: 100%;
        background: $surface-darken-1;
        border-left: solid $primary;
        padding: 1;
    }

    ConceptPanel .panel-header {
        text-style: bold;
        color: $primary-lighten-2;
    }

    ConceptPanel .panel-value {
        padding-left: 1;
    }

    ConceptPanel .panel-divider {
        color: $primary-darken-1;
        margin: 1 0;
    }
    """

    def compose(self) -> ComposeResult:
        with Vertical():
            yield Static("TRUST BY PART", classes="panel-header")
            yield Static("-", id="part-rates", classes="panel-value")
            yield Static("─" * 32, classes="panel-divider")
            yield Static("PATCH DROP", classes="panel-header")
            yield Static("-", id="patch-drop", classes="panel-value")
            yield Static("─" * 32, classes="panel-divider")
            yield Static("ALIGNMENT", classes="panel-header")
            yield Static("-", id="diagnostics", classes="panel-value")

    current_variant: str | None = None

    def show_run(self, run: RunRecord, part_names: dict[int, str], drop: PatchDropReport | None) -> None:
        self.current_variant = run.variant
        self._update_part_rates(run, part_names)
        self._update_patch_drop(drop)
        self._update_diagnostics(run)

    def _update_part_rates(self, run: RunRecord, part_names: dict[int, str]) -> None:
        widget = self.query_one("#part-rates", Static)
        if run.trust is None:
            widget.update(Text("n/a (no concept maps)", style="dim"))
            return
        text = Text()
        for part_id, rate in run.trust.part_rates().items():
            name = part_names.get(part_id, str(part_id))
            style = "green" if rate >= 0.5 else "yellow"
            text.append(f"{name[:18]:<18} ")
            text.append(f"{rate:.3f}\n", style=style)
        widget.update(text)

    def _update_patch_drop(self, drop: PatchDropReport | None) -> None:
        widget = self.query_one("#patch-drop", Static)
        if drop is None or not drop.aggregate:
            widget.update(Text("not run", style="dim"))
            return
        lines = [f"{mode:<8} {acc:.3f}" for mode, acc in drop.aggregate.items()]
        for mode in drop.aggregate:
            if mode != "none":
                lines.append(f"Δ {mode:<6} {drop.delta(mode):+.3f}")
        widget.update("\n".join(lines))

    def _update_diagnostics(self, run: RunRecord) -> None:
        widget = self.query_one("#diagnostics", Static)
        diag = run.diagnostics
        if diag is None:
            widget.update(Text("-", style="dim"))
            return
        lines = [f"{name:<8} {err:.4f}" for name, err in diag.equivariance.items()]
        centers = diag.centers
        if centers.within_group is not None:
            lines.append(f"within  {centers.within_group:.2f}")
        if centers.across_group is not None:
            lines.append(f"across  {centers.across_group:.2f}")
        widget.update("\n".join(lines))
