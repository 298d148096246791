"""Exception types raised across the package."""


class NiraError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NiraError, ValueError):
    """Invalid user-supplied configuration (unknown node, bad cutoff, ...)."""


class IngestionError(NiraError, ValueError):
    """Malformed input file; the message carries row/column coordinates."""


class ContractError(NiraError, ValueError):
    """Inputs violate a shape or value contract."""


class SizeError(ContractError):
    """Input too small or too large for the requested operation."""


class DegenerateInputError(ContractError):
    """Statistical input with no usable variation."""


class EstimationError(NiraError, RuntimeError):
    """A model fit failed; ``node`` names the offending node when known."""

    def __init__(self, message, node=None, diagnostics=None):
        super().__init__(message)
        self.node = node
        self.diagnostics = diagnostics or {}
