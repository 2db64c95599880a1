"""Exception hierarchy shared by all feitsim modules."""


class FeitsimError(Exception):
    """Base class for every error raised by feitsim."""


class DomainError(FeitsimError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ParameterError(FeitsimError, ValueError):
    """Invalid numerical or physical parameter."""


class CommensurabilityError(ParameterError):
    """RF frequency is not an integer multiple of the modulation frequency."""


class CalibrationError(FeitsimError, ValueError):
    pass


class OutOfRangeError(FeitsimError, ValueError):
    """Measured value lies outside the range covered by a scan table."""


class AmbiguityError(FeitsimError):
    """Candidate phases cannot be told apart from the measured trace."""
