"""Exception hierarchy for the acoustica toolkit."""


class AcousticaError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(AcousticaError):
    """Domain rectangles violate nesting or symmetry requirements."""


class DiscretizationError(AcousticaError):
    """Mesh width is not commensurate with the domain rectangles."""


class RefinementError(AcousticaError):
    """Refinement would produce an invalid mesh (e.g. minimal-angle violation)."""


class LineageError(AcousticaError):
    """A refined element has no usable link to its parent element."""


class StabilityError(AcousticaError):
    """The time step violates the CFL stability bound."""


class DivergenceError(AcousticaError):
    """The explicit time stepping produced non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ParameterError(AcousticaError):
    """A scalar parameter is outside its admissible range."""


class ShapeError(AcousticaError):
    """Array inputs that must be conformable are not."""


class ConfigError(AcousticaError):
    """An experiment configuration file could not be parsed or validated."""
