"""Widgets of the report browser."""

from .runs_table import RunsTable
from .summary_bar import SummaryBar
from .concept_panel import ConceptPanel

__all__ = [
    "RunsTable",
    "SummaryBar",
    "ConceptPanel",
]
