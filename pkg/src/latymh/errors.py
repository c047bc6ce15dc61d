"""Exception hierarchy shared by all modules."""


class LatYMHError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimension(LatYMHError, ValueError):
    pass


class DimensionMismatch(LatYMHError, ValueError):
    pass


class RetractionFailure(LatYMHError, ArithmeticError):
    pass


class UnsupportedGeometry(LatYMHError, ValueError):
    pass


class InvalidEdge(LatYMHError, ValueError):
    pass


class InvalidRegion(LatYMHError, ValueError):
    pass


class InvalidPath(LatYMHError, ValueError):
    """Raised for open loops (not-a-loop) and disconnected paths."""


class TargetMismatch(LatYMHError, ValueError):
    pass


class StepTooLarge(LatYMHError, ArithmeticError):
    def __init__(self, msg, step=None):
        super().__init__(msg if step is None else f"step {step}: {msg}")
        self.step = step


class HessianStepError(LatYMHError, ArithmeticError):
    pass


class TooFewSamples(LatYMHError, ValueError):
    pass


class InsufficientSignal(LatYMHError, ValueError):
    pass


class BoundUnavailable(LatYMHError, ValueError):
    pass


class ConfigError(LatYMHError, ValueError):
    """Experiment configuration failed validation (CLI exit code 2)."""
