"""Exception hierarchy for the ffp8 package.

Every error raised by this package derives from FFP8Error so callers can
catch one base type. Subclasses are named after the condition they report.
"""


class FFP8Error(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# Format construction and codec errors
# ---------------------------------------------------------------------------

class WidthMismatch(FFP8Error):
    """x + y + z does not equal the declared total width n."""


class BadSign(FFP8Error):
    """Sign field width x is neither 0 nor 1."""


class BadExponent(FFP8Error):
    """Exponent field width y is less than 1."""


class BadWidth(FFP8Error):
    """Total width n is outside [4, 16], or z is negative."""


class BadBias(FFP8Error):
    """Exponent bias b is outside [-128, 127]."""


class NaNInput(FFP8Error):
    """NaN cannot be encoded; the format has no NaN code."""


class NegativeToUnsigned(FFP8Error):
    """Negative value presented to a format with no sign bit."""


class Fp32Overflow(FFP8Error):
    """Decoded value exceeds the finite range of IEEE-754 binary32."""


# ---------------------------------------------------------------------------
# Bundle container errors
# ---------------------------------------------------------------------------

class BadMagic(FFP8Error):
    """Stream does not start with the FFPB magic bytes."""


class BadVersion(FFP8Error):
    """Container version is not supported by this reader."""


class TruncatedStream(FFP8Error):
    """Stream ended before the declared content was read."""


class DuplicateTensorName(FFP8Error):
    """Two tensors in one bundle share a name."""


class UnresolvedReference(FFP8Error):
    """A layer references a tensor name that is not in the bundle."""


# ---------------------------------------------------------------------------
# Analysis errors
# ---------------------------------------------------------------------------

class NonFiniteInput(FFP8Error):
    """Statistics require finite values; input held NaN or infinity."""


# ---------------------------------------------------------------------------
# Search errors
# ---------------------------------------------------------------------------

class NonPositiveMax(FFP8Error):
    """Bias fitting needs a strictly positive target magnitude."""


class EmptyCandidates(FFP8Error):
    """Candidate generation produced no valid format."""


class EmptyModel(FFP8Error):
    """Model bundle holds no quantizable layers."""


class EmptyCalibration(FFP8Error):
    """Calibration set holds no samples."""


# ---------------------------------------------------------------------------
# Toy network errors
# ---------------------------------------------------------------------------

class BadSizes(FFP8Error):
    """Dataset sizes are not positive integers."""


class DivergedTraining(FFP8Error):
    """Training loss became non-finite."""


class ShapeMismatch(FFP8Error):
    """Batch shape does not match the model input width."""


class MissingAssignment(FFP8Error):
    """Quantized forward needs a format assignment covering every layer."""


# ---------------------------------------------------------------------------
# Report errors
# ---------------------------------------------------------------------------

class SchemaViolation(FFP8Error):
    """Report payload is missing required keys for its kind."""
