"""Exception hierarchy shared by all ddefix modules."""


class DDEFixError(Exception):
    """Base class for every error raised by ddefix."""


class InvalidInputError(DDEFixError, ValueError):
    """Malformed data: non-finite values, bad grids, out-of-range parameters."""


class DimensionError(InvalidInputError):
    """Operator and function dimensions do not compose."""


class NonCausalError(InvalidInputError):
    """An operator would read values from the future (e.g. a positive shift)."""


class NotContractionError(DDEFixError):
    """A Lipschitz constant >= 1 was supplied where a strict contraction is required."""


class NotEventuallyContractingError(NotContractionError):
    """No admissible weight makes the right-hand side a strict contraction."""


class DivergenceError(DDEFixError):
    """Picard iteration diverged although a contraction constant < 1 was declared."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SpecError(InvalidInputError):
    """A problem specification file failed validation."""
