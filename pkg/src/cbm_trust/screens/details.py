"""Run detail screen."""

from textual.app import ComposeResult
from textual.binding import Binding
from textual.screen import Screen
from textual.containers import Container, Horizontal, VerticalScroll
from textual.widgets import Static
from rich.table import Table
from rich.text import Text

from ..harness.records import RunRecord, RunStatus
from ..losses import LOSS_COMPONENTS


class DetailsScreen(Screen):
    """Configuration, loss curve and per-concept trust of one run."""

    BINDINGS = [
        Binding("escape", "go_back", "Back", show=True),
        Binding("backspace", "go_back", "Back", show=False),
    ]

    DEFAULT_CSS = """
    DetailsScreen {
        padding: 1 2;
    }

    DetailsScreen #back-header {
        height: 1;
        margin-bottom: 1;
    }

    DetailsScreen #back-label {
        width: auto;
    }

    DetailsScreen #variant-label {
        dock: right;
        width: auto;
        color: $text-muted;
    }

    DetailsScreen .detail-section {
        height: auto;
        margin-bottom: 1;
        padding: 1;
        border: solid $surface-lighten-2;
    }

    DetailsScreen .section-title {
        text-style: bold;
        padding-bottom: 1;
    }

    DetailsScreen .detail-row {
        height: auto;
        layout: horizontal;
    }

    DetailsScreen .detail-label {
        width: 22;
        color: $text-muted;
    }

    DetailsScreen .detail-value {
        width: 1fr;
    }

    DetailsScreen #run-error {
        color: $error;
    }
    """

    def __init__(self, run: RunRecord) -> None:
        super().__init__()
        self.run = run

    def compose(self) -> ComposeResult:
        run = self.run
        with Horizontal(id="back-header"):
            yield Static("← Back (Esc)", id="back-label")
            yield Static(run.variant, id="variant-label")

        with VerticalScroll():
            if run.status is RunStatus.FAILED:
                with Container(classes="detail-section"):
                    yield Static("Failed", classes="section-title")
                    yield Static(run.error or "unknown error", id="run-error")

            with Container(classes="detail-section"):
                yield Static("Configuration", classes="section-title")
                for label, value in self._config_rows():
                    with Horizontal(classes="detail-row"):
                        yield Static(label, classes="detail-label")
                        yield Static(value, classes="detail-value")

            with Container(classes="detail-section"):
                yield Static("Results", classes="section-title")
                for label, value in self._result_rows():
                    with Horizontal(classes="detail-row"):
                        yield Static(label, classes="detail-label")
                        yield Static(value, classes="detail-value")

            if run.epochs:
                with Container(classes="detail-section"):
                    yield Static("Losses per epoch", classes="section-title")
                    yield Static(self._epochs_table(), id="epochs-table")

            if run.trust is not None:
                with Container(classes="detail-section"):
                    yield Static("Trust per concept", classes="section-title")
                    yield Static(self._trust_table(), id="trust-table")

    def _config_rows(self) -> list[tuple[str, str]]:
        config = self.run.config
        modules = ", ".join(m.value for m in config.modules) or "none"
        return [
            ("Model", config.model.value),
            ("Alignment modules", modules),
            ("Seed", str(config.seed)),
            ("Epochs (warm-up)", f"{config.epochs} ({config.warmup_epochs})"),
            ("Learning rate", f"{config.learning_rate:g}"),
            ("Batch size", str(config.batch_size)),
            ("Prototypes", f"{config.num_prototypes} x {config.feature_dim}"),
            ("Top-N / similarity", f"{config.top_n} / {config.similarity.value}"),
            ("Dataset", str(config.dataset) if config.dataset else "synthetic"),
        ]

    def _result_rows(self) -> list[tuple[str, str]]:
        run = self.run
        rows = [
            ("Trust score", _fmt(run.trust_score)),
            ("Class accuracy", _fmt(run.class_accuracy)),
            ("Concept accuracy", _fmt(run.concept_accuracy)),
            ("Train class accuracy", _fmt(run.train_class_accuracy)),
            ("Train concept accuracy", _fmt(run.train_concept_accuracy)),
            ("Wall clock", f"{run.wall_clock_seconds:.1f}s"),
        ]
        if run.trust is not None:
            rows.append(("Box (pixels)", "x".join(str(s) for s in run.trust.box_pixels)))
            if run.trust.excluded_concepts:
                rows.append(("Excluded concepts", ", ".join(map(str, run.trust.excluded_concepts))))
        if run.checkpoint:
            rows.append(("Checkpoint", run.checkpoint))
        return rows

    def _epochs_table(self) -> Table:
        table = Table(box=None, pad_edge=False)
        table.add_column("Epoch", justify="right")
        table.add_column("Stage")
        components = [c for c in LOSS_COMPONENTS if any(c in e.components for e in self.run.epochs)]
        for name in components:
            table.add_column(name, justify="right")
        table.add_column("total", justify="right", style="bold")
        for epoch in self.run.epochs:
            values = [f"{epoch.components[c]:.4f}" if c in epoch.components else "-" for c in components]
            table.add_row(str(epoch.epoch), epoch.stage.value, *values, f"{epoch.total:.4f}")
        return table

    def _trust_table(self) -> Table:
        table = Table(box=None, pad_edge=False)
        table.add_column("Concept", justify="right")
        table.add_column("Label")
        table.add_column("Part", justify="right")
        table.add_column("Contained", justify="right")
        table.add_column("Rate", justify="right")
        for concept in self.run.trust.concepts:
            style = "green" if concept.rate >= 0.5 else "yellow"
            table.add_row(
                str(concept.concept_id),
                concept.label,
                str(concept.part_id),
                f"{concept.contained}/{concept.images}",
                Text(f"{concept.rate:.3f}", style=style),
            )
        return table

    def action_go_back(self) -> None:
        self.app.pop_screen()


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"
