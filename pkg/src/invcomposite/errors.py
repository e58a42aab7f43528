"""Typed failures.

Validation errors describe bad input (CLI exit code 2); numerical errors
describe a computation that could not be completed (exit code 3).
"""


class InvCompositeError(Exception):
    """Base class. ``detail`` carries machine-readable context."""

    exit_code = 1

    def __init__(self, message, **detail):
        super().__init__(message)
        self.detail = detail

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), **self.detail}


class ValidationError(InvCompositeError):
    exit_code = 2


class NumericalError(InvCompositeError):
    exit_code = 3


class MissingColumn(ValidationError):
    pass


class NonBinaryTreatment(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class DegenerateStratum(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class ConstantOutcome(ValidationError):
    pass


class NonPositiveWeight(ValidationError):
    pass


class DesignMismatch(ValidationError):
    """The requested design needs data roles that are absent."""


class InvalidSpec(ValidationError):
    pass


class DegenerateTreatment(ValidationError):
    pass


class RankDeficient(NumericalError):
    pass


class NearSingular(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class Separation(NumericalError):
    pass


class IntegrationFailure(NumericalError):
    pass


class NegativeSpectrum(NumericalError):
    pass


class ZeroVarianceX(NumericalError):
    pass


class StudyFailed(NumericalError):
    """Too many Monte Carlo replicates failed."""
