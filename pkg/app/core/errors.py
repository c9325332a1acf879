"""Error categories shared by every layer.

Services raise these; only the CLI turns them into process exit statuses.
"""


class PatError(Exception):
    exit_code = 1


class ConfigError(PatError):
    """Invalid run configuration or invalid arguments."""
    exit_code = 2


class ShapeError(ConfigError, ValueError):
    """Tensor or graph shapes do not compose."""


class MaskError(ConfigError, ValueError):
    """Mask does not fit the network, or cannot be generated as requested."""


class DataIOError(PatError):
    """Dataset or checkpoint files missing, short or unreadable."""
    exit_code = 3


class CheckpointFormatError(DataIOError):
    pass


class CheckpointVersionError(DataIOError):
    pass


class NumericError(PatError, FloatingPointError):
    """Non-finite loss or parameters during training or evaluation."""
    exit_code = 4
