class InputError(ValueError):
    """Malformed argument: wrong shape, out-of-range index, invalid measure."""


class ConfigurationError(ValueError):
    """Artifacts or settings that do not belong together (digest or M mismatch)."""


class NumericError(FloatingPointError):
    """A non-finite value appeared mid-computation.

    ``trajectory`` holds whatever states were produced before the failure.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class SolverDivergedError(NumericError):
    """The height fit produced a non-finite gradient or energy."""

    def __init__(self, message, trace=None):
        super().__init__(message, trajectory=None)
        self.trace = trace
