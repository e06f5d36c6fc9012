"""Exception hierarchy shared by every stage of the pipeline.

Each class carries a ``code`` so the command line can map failures to a
stable exit status.
"""


class MLTAError(Exception):
    """Base class for all package errors."""

    code = 1
    module = "mlta"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class ConfigError(MLTAError, ValueError):
    """Invalid options, schema, or model configuration."""

    code = 2
    module = "config"


class DataError(MLTAError, ValueError):
    """Input data that cannot be used as given."""

    code = 3
    module = "network-data"


class NumericalError(MLTAError, ArithmeticError):
    """A numerical breakdown inside an estimation routine."""

    code = 4
    module = "variational-em"


class FitFailed(NumericalError):
    """Every random start of a fit aborted.

    ``diagnostics`` holds one message per start.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class DataWarning(UserWarning):
    """Non-fatal data issue (for example a constant dummy column)."""
