"""Exception types shared across the package."""


class InvalidExponentError(ValueError):
    """An integrability exponent is outside its admissible range."""


class EmptyIntersectionError(ValueError):
    """A cube does not meet the grid rectangle."""


class IncompatibleGridsError(ValueError):
    """Two grid functions live on different grids."""


class RootTooSmallError(ValueError):
    """Root cubes of a stopping-time descent already exceed the height."""

    def __init__(self, message: str, needed_level: int):
        super().__init__(message)
        self.needed_level = needed_level


class DivergentSeriesError(ValueError):
    """A geometric cube sum was requested outside its convergence range."""


class UnsupportedYoungError(ValueError):
    """A Young-function operation is not defined for this descriptor kind."""


class NonHomogeneousSymbolError(ValueError):
    """A scaling check needs an exactly homogeneous symbol descriptor."""
