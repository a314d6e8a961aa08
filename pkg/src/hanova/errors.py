"""Exception hierarchy for hanova.

Two top-level families matter to callers: ``InputError`` (bad data, bad
model text, designs we refuse) and ``NumericalError`` (a computation that
could not be completed).  The CLI maps them to exit codes 2 and 3.
"""


class HanovaError(Exception):
    """Base class for all hanova errors."""


class InputError(HanovaError):
    """User input (data, model text, configuration) is invalid."""


class NumericalError(HanovaError):
    """A numerical computation failed."""


# --- formula parsing ---------------------------------------------------


class FormulaError(InputError):
    pass


class FormulaSyntaxError(FormulaError):
    """Model text does not match the grammar.

    Carries the 0-based character ``position`` and a description of the
    ``expected`` token.
    """

    def __init__(self, position, expected, found):
        self.position = position
        self.expected = expected
        self.found = found
        super().__init__(
            f"syntax error at position {position}: expected {expected}, found {found!r}"
        )


class EmptyFormulaError(FormulaError):
    pass


class DuplicateTermError(FormulaError):
    pass


class UnknownFactorError(FormulaError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown factor: {name!r}")


# --- data ingestion ----------------------------------------------------


class DataError(InputError):
    pass


class MissingColumnError(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing column: {name!r}")


class UnparseableValueError(DataError):
    """A cell could not be parsed.  ``row`` is the 1-based data row."""

    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")


class EmptyFileError(DataError):
    pass


# --- design construction ------------------------------------------------


class DesignError(InputError):
    """The batching cannot be turned into a usable design."""


class DimensionMismatchError(DesignError):
    pass


class EmptyCellError(DesignError):
    pass


class BalanceError(InputError):
    """Raised by the classical path when the design is not balanced."""


class ConfigError(InputError):
    pass


# --- numerics -----------------------------------------------------------


class SingularMatrixError(NumericalError):
    pass


class RankDeficientConstraintsError(NumericalError):
    pass


class InvalidParameterError(InputError):
    pass


class NumericalFailureError(NumericalError):
    """A sampler conditional could not be formed; carries the batch label."""

    def __init__(self, message, batch=None):
        self.batch = batch
        super().__init__(message if batch is None else f"{message} (batch {batch!r})")


class SerializationError(HanovaError):
    pass
