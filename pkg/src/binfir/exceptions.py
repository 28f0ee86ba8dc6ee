"""Exception hierarchy shared by the library and the CLI."""


class BinFIRError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(BinFIRError, ValueError):
    """Argument outside the mathematical domain of a function."""

    exit_code = 2


class ConfigError(BinFIRError, ValueError):
    """Invalid experiment configuration.

    ``path`` names the offending field, e.g. ``system.input.variance``.
    """

    exit_code = 2

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnsupportedError(BinFIRError, NotImplementedError):
    """Requested combination of algorithm and distribution is not supported."""

    exit_code = 2


class ProtocolError(BinFIRError, RuntimeError):
    """A link carried more than its one-bit budget, or the estimator used data
    it never received."""

    exit_code = 3


class OutputError(BinFIRError, OSError):
    """Writing results failed."""

    exit_code = 4
