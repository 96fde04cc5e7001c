"""Exception hierarchy.

Everything raised on purpose derives from :class:`ReddaError`, which the CLI
maps to exit status 1.
"""


class ReddaError(ValueError):
    """Base class for data and model errors."""


class NotPositiveDefinite(ReddaError):
    """A covariance matrix could not be factored, even after the ridge fallback."""


class ClassCollapsed(ReddaError):
    """Trimming left a class with fewer than two kept observations."""


class Infeasible(ReddaError):
    """Too few kept observations for the requested model."""


class RankDeficient(ReddaError):
    """Regression design is singular on the kept rows."""


class DimensionMismatch(ReddaError):
    """Input column count does not match the fitted model."""


class ParseError(ReddaError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class NonFinite(ParseError):
    """Missing or non-finite absorbance value."""


class UnknownLabel(ReddaError):
    def __init__(self, value, known=()):
        self.value = value
        msg = f"unknown class label {value!r}"
        if known:
            msg += f"; expected one of {list(known)}"
        super().__init__(msg)


class SchemaError(ReddaError):
    """Model document is malformed or truncated."""


class VersionMismatch(SchemaError):
    """Model document was written with an incompatible schema version."""
