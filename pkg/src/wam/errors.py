"""Exception types shared across the package."""


class WamError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(WamError, ValueError):
    """A pattern's length does not match the dimension it is used against."""


class FormatError(WamError, ValueError):
    """A serialized artifact does not follow its binary format."""


class CorruptHeaderError(FormatError):
    """Magic bytes or header fields are not what the format requires."""


class TruncatedPayloadError(FormatError):
    """The file ends before the payload declared by the header."""


class VersionMismatchError(FormatError):
    """The file declares a format version this code does not read."""


class UntrainedDictionaryError(WamError, RuntimeError):
    """A patch codec was used before its prototype dictionary was learned."""


class NoEvidenceError(WamError, RuntimeError):
    """A retrieval produced no active output, so the operation cannot proceed."""


class ConvergenceFailure(WamError, RuntimeError):
    """The generation loop produced no usable result at all."""


class ConfigError(WamError, ValueError):
    """An experiment or codec configuration is missing, malformed, or inconsistent."""
