"""Exception hierarchy.

The CLI maps ``ConfigurationError`` and ``ResourceError`` to exit code 1.
"""


class BSPDEError(Exception):
    pass


class ConfigurationError(BSPDEError):
    """Inconsistent shapes, invalid parameters, off-grid times."""


class DataError(BSPDEError):
    """Non-finite or otherwise unusable numerical input."""


class ResourceError(BSPDEError):
    """A size guard was exceeded."""


class NumericalError(BSPDEError):
    """A linear system that should be regular turned out singular."""


class StructuralError(BSPDEError):
    """Tree/field structure violated (missing children, non-adapted import)."""


class CoercivityError(ConfigurationError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
