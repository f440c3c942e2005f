"""Exception hierarchy shared across the package."""


class ReflbandError(Exception):
    """Base class for all package-specific errors."""


class InputError(ReflbandError):
    """Malformed or non-finite user input."""


class ModelError(ReflbandError):
    """Problem data violates a standing model assumption."""


class NumericalError(ReflbandError):
    """A numerical routine failed to reach its target accuracy."""


class DomainTooSmall(NumericalError):
    """The truncated working domain cannot contain the sought quantity.

    Raised by the free-boundary solver when the objective shows no sign
    change before the upper end of the grid; enlarging the working domain
    is the usual fix.
    """


class PathError(ReflbandError):
    """A simulated path reached a non-finite state.

    Parameters
    ----------
    step : int
        Index of the Euler step at which the state became non-finite.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
