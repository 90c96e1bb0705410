"""Exception hierarchy for deformsfm.

Every failure mode that callers are expected to branch on gets its own
class so that ``except`` clauses can be precise.  All of them derive from
:class:`DeformError`, which itself derives from ``ValueError`` -- bad
inputs and unrecoverable geometric configurations are both, at bottom,
"this input cannot be processed" conditions.
"""

from __future__ import annotations


class DeformError(ValueError):
    """Base class for all errors raised by this package."""


class ParseError(DeformError):
    """A file could not be parsed.

    The message identifies the offending file, and where it makes sense
    the line or field that failed.
    """


class InsufficientPoints(DeformError):
    """Fewer input points than the algorithm's minimum."""


class ZeroProjection(DeformError):
    """A scene point lies on the focal plane (zero third coordinate)."""


class DegenerateDeformation(DeformError):
    """A deformation or deformation class is degenerate for the operation.

    Raised when distinct points collapse onto one viewing ray, and when a
    model class lacks the structure an algorithm requires (for example a
    free affine part).
    """


class CriticalConfiguration(DeformError):
    """The measurement matrix admits more than one essential matrix."""


class RankDeficient(DeformError):
    """A matrix expected to have rank two does not."""


class NoConvergence(DeformError):
    """No solver start converged to a verified solution."""


class MultipleSolutions(DeformError):
    """Several distinct verified solutions where one was expected.

    Attributes:
        solutions: the distinct verified solutions that were found.
    """

    def __init__(self, message: str, solutions=None):
        super().__init__(message)
        self.solutions = solutions if solutions is not None else []


class ScaleDegenerate(DeformError):
    """The scale relating two essential matrices is numerically zero."""


class ScaleUnidentifiable(DeformError):
    """The per-pair scales cannot be separated from the deformation."""


class IllConditioned(DeformError):
    """A spectral gap is too small to trust a rank or nullity estimate."""


class DepthDegenerate(DeformError):
    """A depth recovery system is rank deficient for some point."""


class BasisDegenerate(DeformError):
    """The four basis points are coplanar (or nearly so)."""


class AmbiguousDeformation(DeformError):
    """The data admit a family of compatible deformations, not one."""


class ResidualTooHigh(DeformError):
    """A verified-residual threshold was exceeded."""


class NoConstraint(DeformError):
    """No matching constraint exists within the searched degree range."""


class NonUniqueConstraint(DeformError):
    """The constraint space has dimension greater than one.

    Attributes:
        dimension: dimension of the constraint space found.
        support: union of the monomial supports of a basis of that space,
            as a sorted list of exponent tuples.
    """

    def __init__(self, message: str, dimension: int = 0, support=None):
        super().__init__(message)
        self.dimension = dimension
        self.support = support if support is not None else []


class AllRejected(DeformError):
    """Model selection rejected every candidate model."""
