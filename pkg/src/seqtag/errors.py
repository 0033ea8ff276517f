"""Common exception base so the CLI can map failures to exit codes."""


class SeqtagError(Exception):
    """Base class for all data/processing errors raised by this package."""
