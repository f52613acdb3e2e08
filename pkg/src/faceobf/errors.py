"""Exception hierarchy shared by the library and the CLI."""


class FaceObfError(Exception):
    """Base class for all errors raised by faceobf."""


class DimensionError(FaceObfError, ValueError):
    pass


class FormatError(FaceObfError, ValueError):
    pass


class LengthError(FaceObfError, ValueError):
    pass


class InvalidStep(FaceObfError, ValueError):
    pass


class ConfigError(FaceObfError, ValueError):
    pass


class ExtractorError(FaceObfError, RuntimeError):
    pass


class ProtocolError(ExtractorError):
    """Malformed or unexpected reply from an external extractor."""
