"""Exception hierarchy shared by the library and the CLI.

Each concrete error carries an ``exit_code`` so the command-line front end can
map failures onto its documented codes without inspecting messages.
"""


class BroadCFError(Exception):
    exit_code = 1


class ConfigError(BroadCFError, ValueError):
    """Invalid hyper-parameter or command-line configuration."""

    exit_code = 1


class DataError(BroadCFError):
    """Problems with input data or files on disk."""

    exit_code = 2


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RatingRangeError(ParseError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class ModelFormatError(DataError, ValueError):
    """A serialized model bundle is unreadable or inconsistent."""


class NumericError(BroadCFError, ArithmeticError):
    exit_code = 3


class SolverError(NumericError):
    pass


class ContractViolation(BroadCFError, ValueError):
    """A caller broke an operation's documented precondition."""


class ModelStateError(BroadCFError, RuntimeError):
    pass
