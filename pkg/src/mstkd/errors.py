"""Exception hierarchy shared by all mstkd modules.

The CLI maps these onto distinct exit codes; see `mstkd.cli`.
"""


class MstkdError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MstkdError):
    """Invalid experiment configuration or config file."""


class DataError(MstkdError):
    """Dataset violates a precondition (empty group, insufficient samples, ...)."""


class DimensionError(MstkdError):
    """Tensor or file dimensions do not agree."""


class ContractError(MstkdError):
    """An operation was called outside its stated contract."""


class DegenerateEmbeddingError(MstkdError):
    """A row to be normalized has (near-)zero norm."""


class FormatError(MstkdError):
    """A binary or text artifact file is malformed."""


class DivergenceError(MstkdError):
    """Training produced non-finite losses or gradients."""


class MissingArtifactError(MstkdError):
    """A pipeline stage requires an upstream artifact that does not exist."""


class ProtocolError(MstkdError):
    """A verification pair list cannot be scored (e.g. only one class present)."""


class UnsupportedKindError(MstkdError):
    """Operation not defined for this model kind."""
