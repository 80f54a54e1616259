"""Exception types shared across the toolkit."""


class AngleDroopError(Exception):
    """Base class for all toolkit-specific failures."""


class NoConvergence(AngleDroopError):
    """An iterative solver or settling run failed to reach its tolerance."""


class SecurityViolation(AngleDroopError):
    """A steady state violates the line angle security constraint."""


class NonFiniteState(AngleDroopError):
    """A simulation produced NaN or Inf state entries."""


class InstabilityDetected(AngleDroopError):
    """An observable mode with nonnegative real part makes the H2 norm infinite."""


class ZeroEigenvalueBeyondFirst(AngleDroopError):
    """The Laplacian spectrum has a numerically zero second eigenvalue."""


class ScenarioError(AngleDroopError):
    """A scenario failed validation; the message names the offending field."""
