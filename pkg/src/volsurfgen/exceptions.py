"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so raise the most specific
class that applies.
"""


class VolsurfgenError(Exception):
    """Base class for all package errors."""


class NumericOverflowError(VolsurfgenError):
    """A numerical evaluation produced a non-finite intermediate."""


class ConvergenceError(VolsurfgenError):
    """An iterative or series method failed to reach its tolerance."""


class InvalidPriceError(VolsurfgenError):
    """An option price lies outside its static no-arbitrage bracket."""


class BracketError(VolsurfgenError):
    """A root is not bracketed by the supplied interval."""


class DomainError(VolsurfgenError):
    """An input lies outside the mathematical domain of an operation."""


class DataError(VolsurfgenError):
    """Malformed or rejected data (files, grids, datasets)."""


class ConfigError(VolsurfgenError):
    """Missing or inconsistent configuration/context."""


class TrainingError(VolsurfgenError):
    """Training aborted; carries a diagnostic payload when available."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
