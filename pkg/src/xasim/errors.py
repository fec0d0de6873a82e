"""Exception types shared across the package.

The CLI maps ``ValidationError`` to exit status 2 and ``NumericalError`` to 3.
"""


class ValidationError(ValueError):
    pass


class DarkStateError(ValidationError):
    """The dipole annihilates the initial state, so there is nothing to measure."""


class NumericalError(RuntimeError):
    pass
