"""Exception hierarchy shared across the package."""


class DygedError(Exception):
    """Base class for all package errors."""


class DimensionError(DygedError, ValueError):
    """Operand shapes do not conform."""


class ContractError(DygedError, ValueError):
    """A caller violated an operation precondition."""


class ConfigError(DygedError, ValueError):
    """Invalid configuration or model/variant inconsistency."""


class EmptyInputError(DygedError, ValueError):
    """Not enough data to produce any output."""


class UndefinedMetricError(DygedError, ValueError):
    """Metric is undefined for the given labels (e.g. a single class)."""


class ParseError(DygedError, ValueError):
    """Malformed input file; carries the path and 1-based line number."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")
