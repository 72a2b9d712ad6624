"""Exception hierarchy shared by all modules."""


class MedeqError(Exception):
    """Base class for all package errors."""


class PassivityError(MedeqError, ValueError):
    """Negative absorption (gain) where a passive medium is required."""


class GridError(MedeqError, ValueError):
    """Invalid or insufficient discretization."""


class SingularOperatorError(MedeqError, ArithmeticError):
    """Helmholtz operator could not be inverted to the required accuracy."""


class StabilityError(MedeqError, ArithmeticError):
    """Time stepping left its stability region or drifted in energy."""


class HorizonError(MedeqError, ValueError):
    """Finite-horizon surrogate for an asymptotic limit is not valid."""


class BasisMismatchError(MedeqError, ValueError):
    """Observables defined over different canonical bases."""


class ConfigError(MedeqError, ValueError):
    """Scenario configuration failed validation; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))
