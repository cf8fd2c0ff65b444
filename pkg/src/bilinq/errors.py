"""Exception hierarchy. Each numerical failure carries the CLI exit code it maps to."""


class BilinqError(Exception):
    exit_code = 1


class InvalidArgumentError(BilinqError, ValueError):
    exit_code = 2


class ConfigError(InvalidArgumentError):
    exit_code = 2


class NotPersistentlyExcitingError(BilinqError):
    """Exploration data does not span the lifted space; X is singular."""

    exit_code = 3

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DegenerateDataError(NotPersistentlyExcitingError):
    """The z = [x; u] sequence is not PE, so W = V V^T is singular."""


class NonConvergenceError(BilinqError):
    exit_code = 4

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalError(BilinqError, ArithmeticError):
    exit_code = 5

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SecondOrderConditionError(NumericalError):
    """P_mm is not positive definite, so no minimizing gain exists."""


class NotStabilizableError(NumericalError):
    pass


class FrozenDataError(BilinqError, RuntimeError):
    """Accumulation attempted on frozen data matrices."""
