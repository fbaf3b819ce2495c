"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`QpoolError`,
so callers (and the CLI) can catch one type and report ``type(exc).__name__``.
"""


class QpoolError(Exception):
    pass


class MalformedWav(QpoolError):
    pass


class UnsupportedEncoding(QpoolError):
    pass


class ChannelOutOfRange(QpoolError, IndexError):
    pass


class SampleRateMismatch(QpoolError):
    pass


class EmptyDataset(QpoolError):
    pass


class UnreadablePath(QpoolError):
    pass


class SignalTooShort(QpoolError):
    pass


class EmptyInput(QpoolError, ValueError):
    pass


class ShapeMismatch(QpoolError, ValueError):
    pass


class ConfigMismatch(QpoolError, ValueError):
    pass


class FormatError(QpoolError):
    pass


class DomainError(QpoolError, ValueError):
    pass


class DegenerateLabels(QpoolError, ValueError):
    pass


class NonFiniteScore(QpoolError, ValueError):
    pass


class InsufficientSamples(QpoolError, ValueError):
    pass
