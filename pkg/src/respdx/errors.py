"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """A parameter set violates its documented constraints."""


class SignalLengthError(ValueError):
    """A series is too short for the requested operation."""


class InsufficientPeaksError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    """A statistic is undefined because the relevant variance is zero."""


class NoChangePointError(ValueError):
    pass


class PipelineError(RuntimeError):
    """Failure inside one pipeline stage; ``stage`` names where it happened."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[stage={stage}] {message}")
        self.stage = stage
