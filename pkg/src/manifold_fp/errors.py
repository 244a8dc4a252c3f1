"""Exception types raised by the library."""


class ManifoldFPError(Exception):
    """Base class for all library errors."""


class PoleProximity(ManifoldFPError, ValueError):
    """A sphere-chart operator was evaluated inside the pole exclusion band."""


class ConventionMismatch(ManifoldFPError, ValueError):
    """An SDE spec with the wrong stochastic convention was passed."""


class GridTooSmall(ManifoldFPError, ValueError):
    pass


class ShapeMismatch(ManifoldFPError, ValueError):
    pass


class CflViolation(ManifoldFPError, ValueError):
    """Requested time step exceeds the explicit stability bound."""


class NonFiniteDensity(ManifoldFPError, ArithmeticError):
    pass


class NonFiniteState(ManifoldFPError, ArithmeticError):
    pass


class DegenerateUpdate(ManifoldFPError, ArithmeticError):
    """Bayes normalization constant vanished."""


class WeightCollapse(ManifoldFPError, ArithmeticError):
    """Particle filter effective sample size dropped below the floor."""


class ConfigError(ManifoldFPError, ValueError):
    pass
