"""Exception types shared across the package."""


class MtnetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MtnetError):
    """Operands have incompatible or otherwise invalid shapes."""


class NumericError(MtnetError):
    """Non-finite values or degenerate quantities where finite ones are required."""


class ConfigError(MtnetError):
    """A configuration value violates its contract."""


class DataError(MtnetError):
    """Input data could not be parsed or fails a structural requirement."""


class TrainingError(MtnetError):
    """Optimization diverged or produced unusable gradients."""


class CheckpointError(MtnetError):
    """A checkpoint file is malformed or incompatible with its target."""
