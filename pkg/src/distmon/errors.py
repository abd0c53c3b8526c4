"""Exception hierarchy for the distmon toolchain.

Every failure mode that callers are expected to handle has its own type;
the CLI maps any ``DistmonError`` to exit code 1 and ``UsageError`` to
exit code 2.
"""


class DistmonError(Exception):
    """Base class for all distmon-specific errors."""


class UsageError(DistmonError):
    """Command invoked with arguments that cannot be acted on."""


# -- geometry ---------------------------------------------------------------

class NonPositiveDepth(DistmonError, ValueError):
    """Point or depth lies on or behind the camera plane (z <= 0)."""


class DegenerateConfiguration(DistmonError, ValueError):
    """Point configuration leaves the pose/homography underdetermined."""


class NoConvergence(DistmonError, ArithmeticError):
    """Iterative refinement produced a non-finite or unsolvable system."""


# -- calibration ------------------------------------------------------------

class EmptyResult(DistmonError):
    """No control point survived remapping; calibration must be redone."""


# -- scaling ----------------------------------------------------------------

class InsufficientPoints(DistmonError, ValueError):
    """Fewer correspondences than the regression needs."""


class SingularSystem(DistmonError, ArithmeticError):
    """Normal-equation matrix is singular (all x values identical)."""


# -- people -----------------------------------------------------------------

class EmptyInstance(DistmonError, ValueError):
    """Requested instance id has no pixels in the mask."""


class NoValidDepth(DistmonError):
    """No pixel of the instance has a valid depth value."""


# -- baseline ---------------------------------------------------------------

class HomogeneousDivideByZero(DistmonError, ArithmeticError):
    """Mapped homogeneous point has a vanishing third coordinate."""


# -- evaluation -------------------------------------------------------------

class NoMatchedPairs(DistmonError):
    """Prediction and reference share no comparable pairs."""


# -- pipeline ---------------------------------------------------------------

class ScalingImpossible(DistmonError):
    """Fewer than two control points usable after occlusion filtering."""


# -- synth ------------------------------------------------------------------

class InfeasibleSpec(DistmonError):
    """People cannot be placed in the scene without full overlap."""


class NonPositiveRelative(DistmonError, ValueError):
    """Corruption parameters would yield non-positive relative values."""


# -- io_formats -------------------------------------------------------------

class FormatError(DistmonError):
    """Base for on-disk format errors; carries optional location info."""

    def __init__(self, message, *, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class MalformedHeader(FormatError):
    """File header does not match the expected format."""


class TruncatedPayload(FormatError):
    """Binary payload ended before the declared size."""


class NonFiniteValue(FormatError):
    """Float payload contains NaN or infinity."""


class SchemaMismatch(FormatError):
    """CSV row has the wrong number of columns for its schema."""


class ParseError(FormatError):
    """CSV cell could not be parsed as a number."""


class LabelOverflow(FormatError):
    """Label image cannot represent more than 255 instances."""
