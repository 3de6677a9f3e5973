"""Exception taxonomy shared by all fuserank modules.

CLI exit codes: config errors exit 2, data/format errors exit 3,
numeric errors exit 4, staleness errors exit 5.
"""


class FuserankError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(FuserankError, ValueError):
    """An argument violates an operation's precondition."""


class GeometryError(FuserankError):
    """Convolution/pooling geometry does not produce an integral output size."""


class FormatError(FuserankError):
    """A file does not conform to its binary or textual format."""


class GraphError(FuserankError):
    """A model graph violates a structural invariant."""


class NumericError(FuserankError):
    """A non-finite value appeared where finite arithmetic is required."""


class StalenessError(FuserankError):
    """An artifact was produced by a different configuration or input."""


class ConfigError(FuserankError):
    """The pipeline configuration is invalid."""
