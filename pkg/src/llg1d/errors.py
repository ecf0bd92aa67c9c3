"""Exception types shared across the package."""


class LLGError(Exception):
    pass


class InvalidArgument(LLGError, ValueError):
    """Raised when an input violates a documented precondition on its value or shape."""


class PreconditionViolation(InvalidArgument):
    """Raised when a field that must be saturated (|m(x)| = 1) is not."""


class InvalidNoiseModel(InvalidArgument):
    pass


class StepFailure(LLGError, RuntimeError):
    """A node collapsed towards the origin before renormalisation.

    Carries the time at which the failing step started so callers can
    retry with a smaller step or report where the run broke down.
    """

    def __init__(self, t, message=None, seed=None):
        self.t = float(t)
        self.seed = seed
        msg = message or "node magnitude fell below the collapse threshold"
        where = f"t={self.t:.6g}"
        if seed is not None:
            where += f", seed={seed}"
        super().__init__(f"{msg} ({where})")


class MeasurementFailure(LLGError, RuntimeError):
    pass
