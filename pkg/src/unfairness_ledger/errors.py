"""Exception hierarchy.

Validation problems (bad columns, bad labels) derive from ``ValidationError``;
inputs that are well formed but make a quantity undefined derive from
``DegenerateInputError``. The CLI maps the two families to distinct exit codes.
"""


class ValidationError(ValueError):
    pass


class MissingColumn(ValidationError, KeyError):
    def __init__(self, column: str):
        super().__init__(f"missing column: {column!r}")
        self.column = column

    def __str__(self) -> str:
        return self.args[0]


class MissingValue(ValidationError):
    pass


class NonBinaryGroup(ValidationError):
    pass


class SingleGroupOnly(ValidationError):
    pass


class OutOfRangeScore(ValidationError):
    pass


class NonBinaryOutcome(ValidationError):
    pass


class EmptyTable(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NonIntegralCounts(ValidationError):
    pass


class DegenerateInputError(ValueError):
    pass


class DegenerateOutcome(DegenerateInputError):
    pass


class DegenerateClassifier(DegenerateInputError):
    pass


class NonFinite(DegenerateInputError):
    pass


class NotMonotone(ValueError):
    pass


class TooLarge(ValueError):
    pass
