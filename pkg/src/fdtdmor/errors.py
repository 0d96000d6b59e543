"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class FdtdMorError(Exception):
    """Base class for all package errors."""


class InvalidGridError(FdtdMorError, ValueError):
    pass


class InvalidParameterError(FdtdMorError, ValueError):
    pass


class StampError(FdtdMorError, ValueError):
    """A source or probe points at an unknown that does not exist."""


class DivergenceError(FdtdMorError, ArithmeticError):
    """Time stepping produced non-finite or runaway values."""

    def __init__(self, step: int, engine: str = "full", value: float = float("nan")):
        self.step = step
        self.engine = engine
        self.value = value
        super().__init__(f"{engine} simulation diverged at step {step} (max|x| = {value:.3e})")


class SingularOperatorError(FdtdMorError, ArithmeticError):
    pass


class SolverFailure(FdtdMorError, ArithmeticError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (normalized residual {residual:.3e})")


class DegenerateSourceError(FdtdMorError, ValueError):
    pass


class AliasingError(FdtdMorError, ValueError):
    pass


class InvariantViolation(FdtdMorError, ValueError):
    pass


class DegenerateReferenceError(FdtdMorError, ValueError):
    pass


class ConfigError(FdtdMorError, ValueError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ComparisonError(FdtdMorError, ValueError):
    pass
