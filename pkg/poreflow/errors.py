from __future__ import annotations


class PoreflowError(Exception):
    """Base class for every error raised by the simulation package."""


class DomainError(PoreflowError, ValueError):
    pass


class ConfigError(PoreflowError, ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None) -> None:
        self.reason = message
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class GeometryError(PoreflowError):
    pass


class AxisSingularityError(GeometryError):
    pass


class SingularityError(PoreflowError):
    pass


class SolverError(PoreflowError):
    def __init__(self, message: str, condition: float | None = None) -> None:
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)


class QuadratureWarning(UserWarning):
    pass


class OutputError(PoreflowError):
    def __init__(self, message: str, path: str | None = None) -> None:
        self.path = path
        if path is not None:
            message = f"{message}: {path}"
        super().__init__(message)
