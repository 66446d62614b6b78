"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """A dense or enumerated object would exceed the configured size budget."""


class ValidationError(ValueError):
    """An artifact file or in-memory table violates its declared schema."""


class SingularProbabilityError(ValueError):
    """An outcome with positive measured frequency has vanishing probability."""


class NumericError(ArithmeticError):
    """A computed quantity fell outside its mathematically valid range."""
