"""Shared exception base for the whole engine."""


class HearthError(Exception):
    """Base class for every structured error raised by this package."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context
