"""Screens of the report browser."""

from .loading import LoadingScreen
from .error import ErrorScreen
from .details import DetailsScreen

__all__ = [
    "LoadingScreen",
    "ErrorScreen",
    "DetailsScreen",
]
