"""Exception types shared across the package."""


class StructureError(ValueError):
    """Malformed or inconsistent fractal description."""


class NumericalError(ArithmeticError):
    """A computation produced a result that violates a mathematical invariant."""
