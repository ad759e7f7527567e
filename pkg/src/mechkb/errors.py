"""Exception hierarchy shared by all mechkb modules."""


class MechKbError(Exception):
    """Base class for all package errors."""


class InvalidRelation(MechKbError):
    """Relation identity fields are empty or malformed."""


class EmptyAfterNormalization(MechKbError):
    """Surface text normalized down to the empty string."""


class EmptyText(MechKbError):
    """Embedding requested for empty text."""


class DimMismatch(MechKbError):
    """Vector dimensions disagree."""


class InvalidThreshold(MechKbError):
    """Confidence threshold outside [0, 1]."""


class ProviderUnavailable(MechKbError):
    """Embedding provider unreachable after retries."""


class ProviderProtocolError(MechKbError):
    """Embedding provider answered with a malformed payload."""


class EmptyKb(MechKbError):
    """Index build attempted over zero relations."""


class IndexExists(MechKbError):
    """Index directory already populated and --force not given."""


class CorruptIndex(MechKbError):
    """On-disk index files disagree with the manifest."""


class NormalizationMismatch(MechKbError):
    """Query-time normalization config differs from the build-time one."""


class InvalidK(MechKbError):
    """Rank cutoff k outside the valid range."""


class NoPositives(MechKbError):
    """Precision/recall points need at least one positive label."""


class EmptySpan(MechKbError):
    """Rouge-L comparison over an empty token list."""


class DegenerateMarginals(MechKbError):
    """Chance agreement is 1 and the label vectors differ."""


class LengthMismatch(MechKbError):
    """Paired label vectors have different lengths."""


class InvalidQuery(MechKbError):
    """Query parameters violate the search contract."""
