"""Exception hierarchy.

Data problems derive from :class:`DataError` (a ``ValueError``), numerical
failures from :class:`NumericalError` (an ``ArithmeticError``). The CLI maps
the two families onto distinct exit codes.
"""


class AeprobError(Exception):
    """Base class for all errors raised by this package."""


class DataError(AeprobError, ValueError):
    pass


class NumericalError(AeprobError, ArithmeticError):
    pass


class EmptyCohort(DataError):
    def __init__(self, group=None):
        self.group = group
        super().__init__(f"cohort for group {group} has no records" if group else "cohort has no records")


class _RecordError(DataError):
    reason = "invalid record"

    def __init__(self, record_id, detail=""):
        self.record_id = record_id
        msg = f"{self.reason} (id={record_id!s})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NonPositiveTime(_RecordError):
    reason = "observed time must be positive and finite"


class UnknownStatus(_RecordError):
    reason = "status must be 0 (censored), 1 (AE) or 2 (CE)"


class GroupMismatch(_RecordError):
    reason = "record belongs to a different group"


class EmptyInput(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EstimatorMismatch(DataError):
    pass


class MissingVariance(DataError):
    pass


class UnknownScenario(DataError):
    pass


class UnintegrableForm(DataError):
    pass


class ZeroPersonTime(NumericalError):
    pass


class ZeroDenominator(NumericalError):
    pass


class ZeroValue(NumericalError):
    pass


class RootNotBracketed(NumericalError):
    pass


class TargetUnreachable(NumericalError):
    pass


class BootstrapExhausted(NumericalError):
    pass


class ZeroTotalDensityWarning(RuntimeWarning):
    """Both incidence densities are zero; the delta-method variance is set to 0."""
