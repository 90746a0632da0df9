"""Exception types raised across the package."""


class ParameterError(ValueError):
    """A model or configuration field failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InapplicableError(ValueError):
    """A criterion or formula is not defined for the given parameters."""


class TruncationError(ArithmeticError):
    """The requested tail tolerance cannot be met within ``n_max`` terms."""


class KernelSingularError(ArithmeticError):
    """The occupation kernel denominator vanishes."""


class RootIsolationError(ArithmeticError):
    """Sign changes of an exponential sum could not be isolated."""


class CoefficientOverflowError(OverflowError):
    """Barrier coefficients exceed the representable floating point range."""
