"""Exception types shared across the toolkit."""


class MilagrError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(MilagrError, ValueError):
    """Input arrays have inconsistent shapes."""


class NumericalBreakdown(MilagrError, RuntimeError):
    """The simplex engine lost its way (cycling guard or singular basis)."""


class NodeLimitExceeded(MilagrError, RuntimeError):
    """Branch-and-bound explored more nodes than allowed; the instance is
    beyond desk scale."""


class UnboundedRelaxation(MilagrError, RuntimeError):
    """A relaxation is unbounded below, so the mixed-integer problem has no
    finite optimum."""


class SubproblemInfeasible(MilagrError, RuntimeError):
    """A trust-region subproblem has no feasible point; the feasible set is
    corrupted (the center should always belong to it)."""


class NonpositiveRadius(MilagrError, ValueError):
    """Trust-region radius must be positive."""


class IterationLimit(MilagrError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class UnboundedBelowSuspected(MilagrError, RuntimeError):
    """Objective decreased below the configured floor."""


class SubsolverFailure(MilagrError, RuntimeError):
    """The inner solver failed; carries the original cause as context."""


class BoundaryViolation(MilagrError, ValueError):
    """A barrier term was evaluated at a point on or beyond the boundary."""


class InstanceInfeasibleHeuristic(MilagrError, RuntimeError):
    """The warm-start simulation produced a point outside the constraint set."""


class OracleResolutionInsufficient(MilagrError, RuntimeError):
    """The independent grid oracle cannot certify at the requested accuracy."""


class ConfigError(MilagrError, ValueError):
    """Invalid run configuration (bad solver/instance pairing, bad flags)."""
