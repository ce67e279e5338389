"""Exception types shared across the toolkit.

Every error raised on a contract violation derives from ProtodetError so
callers (and the CLI) can map failures to exit codes without matching on
message text. Data-shaped problems (bad files, dangling references) derive
from DataError; everything else is a usage error.
"""


class ProtodetError(Exception):
    """Base class for all toolkit errors."""


class DataError(ProtodetError):
    """A file or payload violates its format contract."""


class MalformedJsonError(DataError):
    """Input is not syntactically valid JSON or lacks required arrays."""


class DanglingReferenceError(DataError):
    """An annotation points to a missing image or category."""


class NonPositiveBoxError(DataError):
    """Box width/height is not strictly positive or not finite."""


class UnknownImageIdError(DataError):
    """A detection references an image absent from the target split."""


class ZeroVectorError(ProtodetError):
    """An operation requiring a nonzero vector received a zero vector."""


class DimMismatchError(ProtodetError):
    """Vector dimensions disagree."""


class BadMagicError(DataError):
    """Embedding file does not start with the expected magic bytes."""


class VersionMismatchError(DataError):
    """Embedding file declares an unsupported format version."""


class TruncatedFileError(DataError):
    """Embedding file payload is shorter than its header promises."""


class EmptyClassError(ProtodetError):
    """Prototype construction received no instances for a class."""


class NegativeWeightError(ProtodetError):
    """Quality weights must be nonnegative."""


class EmptyInputError(ProtodetError):
    """An aggregation received an empty input."""


class NonPositiveTemperatureError(ProtodetError):
    """Softmax temperature must be strictly positive."""


class RetryExhaustedError(ProtodetError):
    """Rejection sampling could not satisfy its constraint in time."""


class MissingEmbeddingError(ProtodetError):
    """A proposal references an embedding id absent from the store."""


class RefinerFailureError(ProtodetError):
    """A pluggable box refiner failed; propagated unchanged."""


class UnknownPhraseError(ProtodetError):
    """A detection phrase has no mapping and the policy is 'error'."""


class EmptyGroundTruthError(ProtodetError):
    """Evaluation requires at least one ground-truth annotation."""


class ConfigError(ProtodetError):
    """Pipeline configuration is invalid or incomplete."""
