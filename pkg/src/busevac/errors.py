"""Exception hierarchy shared by the loaders, the simulator and the CLI."""


class DataError(Exception):
    """Input data is malformed or inconsistent (CLI exit code 3)."""


class SchemaError(DataError):
    """A required column or file is missing."""


class ReferentialError(DataError):
    """A record references an identifier that does not exist."""


class DataValueError(DataError, ValueError):
    """A field holds an out-of-range value."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class NumericalError(RuntimeError):
    """Training produced a non-finite quantity (CLI exit code 4)."""

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}
