"""Exception types shared across the package.

Every contract violation raises a named subclass of :class:`GelbriskError`
so callers can discriminate failure modes without parsing messages.  Input
validation errors also derive from :class:`ValueError` and solver failures
from :class:`RuntimeError`, keeping ``except ValueError`` idioms working.
"""


class GelbriskError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(GelbriskError, ValueError):
    """Base class for precondition violations on inputs."""


class SolverError(GelbriskError, RuntimeError):
    """Base class for numerical-solver failures."""


# --- linear algebra ---------------------------------------------------------

class NonFinite(ValidationError):
    """An input array contains NaN or infinity."""


class NotPSD(ValidationError):
    """A matrix required to be positive semidefinite is not (within tolerance)."""


class NotPD(ValidationError):
    """A matrix required to be positive definite is not."""


class DimMismatch(ValidationError):
    """Shapes of related inputs disagree."""


class SingularCov(ValidationError):
    """A covariance matrix required to be nonsingular is (numerically) singular."""


# --- calibration ------------------------------------------------------------

class TooFewSamples(ValidationError):
    """Not enough rows to form the requested empirical moments."""


class BadEta(ValidationError):
    """Confidence parameter outside (0, 1]."""


# --- risk coefficients ------------------------------------------------------

class UnsupportedPair(ValidationError):
    """No closed form for this (risk measure, structural class) combination."""


class NotPositiveHomogeneous(ValidationError):
    """The risk measure lacks positive homogeneity, so no standard coefficient exists."""


class NotAdmissibleSpectrum(ValidationError):
    """Spectrum is not nonnegative, nondecreasing, and normalized to integral one."""


class NotAdmissibleDistortion(ValidationError):
    """Distortion is not nondecreasing with h(0) = 0 and h(1) = 1."""


class EmptyFamily(ValidationError):
    """A supremum over an empty family of spectra was requested."""


class OutOfRange(ValidationError):
    """Scalar argument outside its admissible open interval."""


# --- closed-form risk -------------------------------------------------------

class NegativeAlpha(ValidationError):
    """Standard risk coefficient must be nonnegative here."""


class AlphaNotPositive(ValidationError):
    """Worst-case moment extraction needs a strictly positive coefficient."""


class ZeroPortfolio(ValidationError):
    """Operation is undefined at w = 0."""


class MahalanobisUnsupported(ValidationError):
    """Closed-form worst-case moments are only available for the Euclidean ball."""


class DegenerateDeviation(ValidationError):
    """w'Σw = 0: the worst-case covariance formula divides by the deviation."""


class BadBeta(ValidationError):
    """Risk level/aversion parameter outside its admissible range."""


class RootBracketFailure(SolverError):
    """A univariate root could not be bracketed; carries search diagnostics."""


class HypothesisViolated(ValidationError):
    """Inputs fall outside the hypotheses of the quasi-closed-form result."""


# --- SDP layer --------------------------------------------------------------

class SolverDidNotConverge(SolverError):
    """The conic solver stopped without an Optimal status."""


class SingularConstraintGram(SolverError):
    """Equality constraints are linearly dependent (redundant after rank filtering)."""


class ZeroRadius(ValidationError):
    """The robust reformulation requires a strictly positive radius."""


class BadP(ValidationError):
    """Tracking-error exponent must be 1 or 2."""


class EmptyPieces(ValidationError):
    """A piecewise loss description must contain at least one piece."""


class IoError(GelbriskError, OSError):
    """Reading or writing a problem file failed at the OS level."""


# --- portfolio optimization -------------------------------------------------

class InfeasibleSet(ValidationError):
    """The requested feasible set is empty."""


# --- data / CLI -------------------------------------------------------------

class ParseError(ValidationError):
    """Malformed input text (CSV cell or problem file); message locates it."""


class NonMonotoneDates(ValidationError):
    """Panel dates are not strictly increasing."""


class MissingValue(ValidationError):
    """Empty/NaN cell in a return panel; message names the row and column."""


class TooShortPanel(ValidationError):
    """Panel too short for the requested window/block layout."""
