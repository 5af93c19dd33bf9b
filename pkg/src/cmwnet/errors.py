"""Exception hierarchy shared by all cmwnet modules."""


class CMWNetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CMWNetError):
    """Invalid configuration, ablation combination, or config file."""


class MissingPretrainedError(ConfigurationError):
    """A pretrained-weights file was requested but is not available."""


class InputError(CMWNetError):
    """Malformed runtime input (shape mismatch, out-of-range values)."""


class DataError(CMWNetError):
    """Dataset problems: missing files, undecodable images, size mismatches."""


class EmptyForegroundError(DataError):
    """Ground truth contains no foreground pixels; threshold metrics undefined."""


class NumericalError(CMWNetError):
    """Non-finite values encountered during training."""


class CheckpointError(CMWNetError):
    """Unreadable checkpoint or config-hash mismatch."""
