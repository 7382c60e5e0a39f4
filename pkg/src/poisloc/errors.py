"""Exception types raised across the package."""

import numpy as np


class ExclusionViolation(ValueError):
    """A candidate source position lies inside a sensor's exclusion ball."""


class DomainError(ValueError):
    """A time argument lies outside the interval where a quantity is defined."""


class FormError(TypeError):
    """An operation needs a constant signal but received a tabulated one."""


class DegenerateMass(RuntimeError):
    """The posterior has no mass on the admissible parameter set."""


class SingularGeometry(np.linalg.LinAlgError):
    """The trilateration system is (numerically) singular."""


class ConfigError(ValueError):
    """Invalid experiment configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InsufficientReplications(RuntimeError):
    """Monte Carlo standard error too large for the requested comparison."""
