"""Error types raised by the qthermo modules.

Every domain error is a ValueError so callers that only guard against bad
input values keep working. Errors that come with evidence (a partial
decomposition, a failing certificate) keep it on the instance.
"""


class QThermoError(ValueError):
    """Base class of all domain errors."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class NotHermitian(QThermoError):
    pass


class NotPSD(QThermoError):
    pass


class DimMismatch(QThermoError):
    pass


class NotSubunital(QThermoError):
    pass


class SingularNormalizer(QThermoError):
    pass


class DegenerateCenter(QThermoError):
    pass


class NotTracePreserving(QThermoError):
    pass


class RefinementStall(QThermoError):
    """A reducible block admits no finer commuting projection.

    The decomposition reached so far is kept on ``decomposition`` and the
    offending block projection on ``block``.
    """

    def __init__(self, message, decomposition=None, block=None, **details):
        super().__init__(message, **details)
        self.decomposition = decomposition
        self.block = block


class FactorizationFailed(QThermoError):
    pass


class PreconditionUnmet(QThermoError):
    def __init__(self, message, certificate=None, **details):
        super().__init__(message, **details)
        self.certificate = certificate


class NotNormalized(QThermoError):
    pass


class UnknownOutcome(QThermoError):
    pass


class NotStrictlyPositiveOperation(QThermoError):
    def __init__(self, message, outcome=None, **details):
        super().__init__(message, outcome=outcome, **details)
        self.outcome = outcome


class XiNotStrictlyPositive(QThermoError):
    pass


class UnknownGenerator(QThermoError):
    pass


class SchemaError(QThermoError):
    def __init__(self, message, path=None, **details):
        super().__init__(message, path=path, **details)
        self.path = path
