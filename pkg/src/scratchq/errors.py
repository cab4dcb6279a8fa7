"""Exception taxonomy shared across the pipeline.

The CLI maps these onto its exit codes: input/data problems exit 2,
numeric failures exit 3, cross-validation fold failures exit 4, and
artifact mismatches exit 5.
"""


class ScratchqError(Exception):
    """Base class for all library errors."""


# --- input / data errors (CLI exit 2) ---------------------------------------

class InputError(ScratchqError):
    """Malformed or unusable input data."""


class AllMissing(InputError):
    """A series contains no observed value to interpolate from."""


class DurationTooShort(InputError):
    """Signal span is shorter than one analysis window."""


class NoContact(InputError):
    """No tablet contact was sensed anywhere in the window."""


class Degenerate(InputError):
    """Filter window too small for the requested polynomial order."""


class TooShort(InputError):
    """Series shorter than the smoothing filter window."""


class TooFewCriticalPoints(InputError):
    """Fewer than two stroke reversals in the window."""


class LengthMismatch(InputError):
    """Signal length does not match the declared transform length."""


class EmptyTrainingSet(InputError):
    """Scaler or model fit requested on zero samples."""


class ShapeMismatch(InputError):
    """Input vector length does not match the network input layer."""


class EmptyBatch(InputError):
    """Loss requested on an empty batch."""


class EmptyInput(InputError):
    """Metric requested on empty arrays."""


class SingleParticipant(InputError):
    """Leave-one-subject-out needs at least two participants."""


class AllZeroDifferences(InputError):
    """Every paired difference is zero; the signed-rank test is undefined."""


class TooFewPairs(InputError):
    """Fewer than five nonzero paired differences."""


class ConstantInput(InputError):
    """Rank correlation is undefined when an input is constant."""


class NegativePower(InputError):
    """Power values must be nonnegative for scale mapping."""


class AliasedTone(InputError):
    """Requested tone frequency is at or above a channel's Nyquist rate."""


class MissingFile(InputError):
    """A manifest referenced a file that does not exist."""


class SchemaMismatch(InputError):
    """File header or manifest does not match a supported schema."""


class MalformedRow(InputError):
    """A data row could not be parsed."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


# --- numeric errors (CLI exit 3) ---------------------------------------------

class NumericError(ScratchqError):
    """Non-finite values encountered during numeric work."""


class NonFiniteLoss(NumericError):
    """Training loss became NaN or infinite."""


# --- fold errors (CLI exit 4) -------------------------------------------------

class FoldFailure(ScratchqError):
    """A cross-validation fold could not be completed."""


# --- artifact errors (CLI exit 5) ---------------------------------------------

class ArtifactError(ScratchqError):
    """Problems with serialized model/feature artifacts."""


class ChecksumFailure(ArtifactError):
    """Artifact bytes do not match their integrity checksum."""


class VersionUnsupported(ArtifactError):
    """Artifact was written with an unsupported format version."""


class TaskMismatch(ArtifactError):
    """Artifact task tag does not match the requested task."""
