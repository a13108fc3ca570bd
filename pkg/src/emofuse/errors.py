"""Shared exception base so the CLI can separate expected failures from bugs."""


class EmofuseError(Exception):
    """Base for all errors this package raises on bad input or bad state."""
