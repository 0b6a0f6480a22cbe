"""Exception types raised by the engagement engine."""


class TadError(Exception):
    """Base class for all engine errors."""


class CommandOutOfBounds(TadError, ValueError):
    pass


class LOSRateUndefined(TadError):
    pass


class DegenerateLOS(TadError):
    pass


class SingularGeometry(TadError):
    pass


class SingularInnovationCov(TadError):
    pass


class DegenerateRatio(TadError, ValueError):
    pass


class NonConvergent(TadError):
    pass


class ParseError(TadError):
    """Scenario text could not be parsed; ``location`` names the line or field."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ValidationError(TadError, ValueError):
    """A parsed scenario violates a config invariant."""


class NoEvent(TadError):
    pass


class SimulationError(TadError):
    """Wraps a failure inside the closed loop with the step where it happened."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
