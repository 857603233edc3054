"""Exception hierarchy shared by all modules.

The CLI maps :class:`DataError` subclasses to exit code 2 and anything else
derived from :class:`IfxError` to exit code 3.
"""


class IfxError(Exception):
    """Base class for every error raised by the package."""


class DataError(IfxError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyDataset(DataError):
    pass


class ConsistencyError(DataError):
    pass


class TooShort(DataError):
    """A channel is too short for the requested transform."""


class DomainError(IfxError, ValueError):
    """An argument is outside the domain of the operation."""


class ModelError(IfxError, ValueError):
    """A discretisation model violates its invariants."""


class SchemaError(IfxError, KeyError):
    """A row or table does not carry the columns a model expects."""
