"""Exception hierarchy shared across the package."""


class EmodError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(EmodError, ValueError):
    pass


class DomainError(EmodError, ValueError):
    pass


class InvalidConfig(EmodError, ValueError):
    """A configuration value is out of range; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NotScalar(EmodError, ValueError):
    pass


class DoubleBackward(EmodError, RuntimeError):
    pass


class SequenceTooLong(EmodError, ValueError):
    pass


class UnregisteredChannel(EmodError, KeyError):
    pass


class SegmentTooShort(EmodError, ValueError):
    pass


class InvalidBand(EmodError, ValueError):
    pass


class TooFewChannels(EmodError, ValueError):
    pass


class UnknownCategory(EmodError, KeyError):
    pass


class DegenerateScale(EmodError, ValueError):
    pass


class EmptyDataset(EmodError, ValueError):
    pass


class DegenerateBatch(EmodError, ValueError):
    """Every anchor in a contrastive batch had an empty positive set."""


class BadTarget(EmodError, ValueError):
    pass


class EmptyMatrix(EmodError, ValueError):
    pass


class TooFewSamples(EmodError, ValueError):
    pass


class CheckpointMismatch(EmodError, ValueError):
    pass


class FormatError(EmodError, ValueError):
    """Base for file parsing failures."""


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    def __init__(self, message, segment_index=None):
        super().__init__(message)
        self.segment_index = segment_index


class LabelSchemeMismatch(FormatError):
    pass
