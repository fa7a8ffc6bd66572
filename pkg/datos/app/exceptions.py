# app/exceptions.py


class DatosError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(DatosError, ValueError):
    pass


class GraphError(ConfigurationError):
    pass


class DataError(DatosError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class NumericalError(DatosError, RuntimeError):
    pass


class NonterminationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message: str, rows=None, k: int | None = None):
        self.rows = list(rows or [])
        self.k = k
        super().__init__(message)
