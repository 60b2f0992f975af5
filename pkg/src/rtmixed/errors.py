"""Exception hierarchy. Each top-level class maps to a CLI exit code."""


class RtMixedError(Exception):
    exit_code = 1


class SchemaError(RtMixedError):
    """Input file does not match the declared column schema."""

    exit_code = 2


class RowError(SchemaError):
    """One or more rows carry an invalid response time.

    ``rows`` holds 1-based data-row numbers (header excluded).
    """

    def __init__(self, message, rows):
        self.rows = list(rows)
        shown = ", ".join(str(r) for r in self.rows[:20])
        more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
        super().__init__(f"{message}: rows {shown}{more}")


class DesignError(RtMixedError):
    """The table does not support the two-condition within-subject design."""

    exit_code = 3


class TransformError(DesignError):
    def __init__(self, message, rows):
        self.rows = list(rows)
        shown = ", ".join(str(r) for r in self.rows[:20])
        more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
        super().__init__(f"{message}: rows {shown}{more}")


class NumericError(RtMixedError):
    exit_code = 4


class UnstableEstimateError(RtMixedError):
    exit_code = 5


class DomainError(RtMixedError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2


class ScaleError(DomainError):
    """Operation requested on a table with the wrong measurement scale."""
