"""Exception hierarchy shared across the package."""


class EvidenceLabError(Exception):
    """Base class for all package errors."""


class DomainError(EvidenceLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedConfigurationError(EvidenceLabError, ValueError):
    """The requested measure/region combination is not supported."""


class NumericalError(EvidenceLabError, ArithmeticError):
    """A numerical routine failed to reach its stated accuracy."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class UndefinedConditionalError(EvidenceLabError, ZeroDivisionError):
    """A conditional probability was requested on a null event."""


class ConfigError(EvidenceLabError, ValueError):
    """An experiment configuration failed validation.

    ``errors`` holds every problem found, not only the first one.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
