"""Exception hierarchy shared across the pipeline."""

from sklearn.exceptions import NotFittedError


class CoinError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(CoinError, ValueError):
    pass


class ConfigError(InvalidParameterError):
    """Invalid configuration; ``field`` names the offending dotted path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownClassError(InvalidParameterError):
    pass


class DimensionMismatchError(CoinError, ValueError):
    pass


class InsufficientSamplesError(CoinError, ValueError):
    pass


class ZeroVectorError(CoinError, ValueError):
    pass


class DegenerateRhoError(CoinError, ValueError):
    pass


class GraphError(CoinError, IndexError):
    """Out-of-range or non-anchor node queries and empty neighbor pools."""


class MalformedFileError(CoinError, ValueError):
    """A data file could not be parsed.

    :param path: file being read
    :param row: 1-based line number of the offending row, header is line 1
    :param field: column name, if the problem is local to one field
    """

    def __init__(self, path, message, row=None, field=None):
        self.path = str(path)
        self.row = row
        self.field = field
        where = self.path
        if row is not None:
            where += f", row {row}"
        if field is not None:
            where += f", field {field!r}"
        super().__init__(f"{where}: {message}")


class NotTrainedError(CoinError, NotFittedError):
    pass


class DivergenceError(CoinError, FloatingPointError):
    pass
