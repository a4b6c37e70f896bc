"""Exception hierarchy shared across the simulator."""


class RagSemComError(Exception):
    """Base class for all simulator errors."""


class InvalidThresholds(RagSemComError):
    """Canny thresholds violate low < high."""


class MalformedStream(RagSemComError):
    """A coded byte stream cannot be parsed; usually channel corruption."""


class LengthMismatch(RagSemComError):
    """Decoded content disagrees with the declared dimensions."""


class IndexOutOfRange(RagSemComError):
    """A sparse-coded edge index falls outside the map."""


class TruncatedFrame(RagSemComError):
    """A transmission frame is shorter than its declared layout."""


class LengthNotMultipleOf3(RagSemComError):
    """Repetition-3 decode input is not a whole number of triples."""


class DimensionMismatch(RagSemComError):
    """Embedding or image dimensions disagree."""


class CorruptStore(RagSemComError):
    """Knowledge-base store failed its integrity check on load."""


class ReviewerUnavailable(RagSemComError):
    """External reviewer endpoint could not be reached."""


class BudgetTooSmall(RagSemComError):
    """Prompt character budget cannot hold the original caption."""


class CodecUnavailable(RagSemComError):
    """The general-purpose text codec is not present on this system."""


class ServiceUnavailable(RagSemComError):
    """Generation/model service refused or failed the request."""


class ServiceTimeout(RagSemComError):
    """Generation/model service did not answer in time."""


class MalformedResponse(RagSemComError):
    """Service answered with a payload that violates the wire protocol."""
