"""Base exception for everything raised by this package."""


class ContactKitError(Exception):
    """Common ancestor so callers (and the CLI) can catch package errors at once."""
