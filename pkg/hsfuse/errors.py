"""Exception hierarchy for hsfuse."""

from __future__ import annotations


class FusionError(Exception):
    """Base class for every error raised by hsfuse."""


class DimensionError(FusionError, ValueError):
    """Array shapes or image sizes do not conform."""


class ArgumentError(FusionError, ValueError):
    """An argument or configuration value is outside its valid range."""


class FormatError(FusionError, ValueError):
    """A cube, kernel or SRF file is malformed."""
