"""Exception hierarchy shared across the package."""


class BiasedCoxError(Exception):
    """Base class for all package errors."""


class InputError(BiasedCoxError):
    """Invalid user-supplied data or configuration (CLI exit code 2)."""


class MissingColumn(InputError):
    def __init__(self, column):
        super().__init__(f"missing column {column!r}")
        self.column = column


class ParseError(InputError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}: cannot parse {column}={value!r}")
        self.row = row
        self.column = column


class InvariantViolation(InputError):
    def __init__(self, row, reason):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class EmptyDataset(InputError):
    pass


class NoEvents(InputError):
    pass


class DomainError(InputError, ValueError):
    pass


class NonConvergence(BiasedCoxError):
    """Newton iterations exhausted (CLI exit code 3)."""


class DegenerateInformation(NonConvergence):
    pass


class AcceptanceStall(BiasedCoxError):
    pass


class CalibrationFailure(BiasedCoxError):
    pass
