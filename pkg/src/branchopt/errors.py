"""Exception types shared across the package."""

__all__ = [
    "BranchoptError",
    "OverlapError",
    "GapError",
    "IncompatibleFacetError",
    "IncongruentReferenceError",
    "GridMismatchError",
    "IncompatibleLoadError",
    "InconsistentSystemError",
    "FactorizationFailure",
    "PhaseOutOfRangeError",
    "DomainError",
    "NoConvergenceError",
    "NonMonotoneWarning",
]


class BranchoptError(Exception):
    """Base class for all errors raised by this package."""


class OverlapError(BranchoptError):
    """Two subdomain rectangles intersect on a set of positive area."""


class GapError(BranchoptError):
    """The subdomains do not cover the bounding box."""


class IncompatibleFacetError(BranchoptError):
    """A shared facet is neither a full match nor an exact two-way split."""


class IncongruentReferenceError(BranchoptError):
    """Subdomains assigned to one reference are not congruent under their rotations."""


class GridMismatchError(BranchoptError):
    """Cell grids of coupled subdomains do not line up edge by edge."""


class IncompatibleLoadError(BranchoptError):
    """Boundary load violates global force or torque balance, or conflicts with itself."""


class InconsistentSystemError(BranchoptError):
    """A redundant constraint row has a contradictory right-hand side."""


class FactorizationFailure(BranchoptError):
    """The dual matrix could not be factorized or the solve did not reach tolerance."""


class PhaseOutOfRangeError(BranchoptError):
    """A phase value lies outside the admissible interval."""


class DomainError(BranchoptError, ValueError):
    """An objective was evaluated outside its domain of definition."""


class NoConvergenceError(BranchoptError):
    """An iteration failed to reach its stopping criterion."""


class NonMonotoneWarning(UserWarning):
    """The recorded objective increased between descent steps."""
