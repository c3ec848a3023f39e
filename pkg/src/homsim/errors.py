"""Exception hierarchy.

Validation failures (bad parameters, bad config) derive from
:class:`ValidationError`; everything else raised at run time derives from
:class:`HomError` directly. The CLI maps the two families to distinct exit
codes.
"""


class HomError(Exception):
    """Base class for all package errors."""


class ValidationError(HomError, ValueError):
    """A parameter or configuration value is outside its allowed domain."""


class InvalidSource(ValidationError):
    pass


class InvalidBeamSplitter(ValidationError):
    pass


class InvalidDetector(ValidationError):
    pass


class InvalidAfterpulse(ValidationError):
    pass


class InvalidGating(ValidationError):
    pass


class InvalidVpi(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class DegenerateDenominator(HomError):
    """Visibility requested where both singles probabilities cannot be nonzero."""


class InconsistentProbabilities(HomError):
    pass


class RateTooHigh(HomError):
    """Detection rate times dead time is at or above one."""


class FitDiverged(HomError):
    pass


class InsufficientData(HomError):
    pass


class NoGates(HomError):
    """No coinciding gate pairs were found in a time-tag stream."""


class ParseError(HomError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason
