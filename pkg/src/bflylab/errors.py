"""Shared exception types. Exit-code mapping lives in the CLI."""


class BflyError(Exception):
    """Base class for all package errors."""


class NumericDomainError(BflyError):
    """Non-finite or otherwise out-of-domain numeric input."""


class ShapeError(BflyError):
    """Dimension or length mismatch."""


class ConfigError(BflyError):
    """Invalid configuration value or schema violation."""


class CapacityError(ConfigError):
    """A tensor dimension exceeds an on-chip buffer capacity."""


class LayoutError(BflyError):
    """Structurally malformed bank-layout data (unpairable columns, bad tags)."""


class AccuracyLookupError(BflyError):
    """Accuracy table has no entry for a requested configuration."""
