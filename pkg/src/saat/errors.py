"""Exception types raised across the package."""


class SaatError(Exception):
    pass


class InvalidShapeError(SaatError, ValueError):
    pass


class InvalidConfigError(SaatError, ValueError):
    pass


class ContractViolationError(SaatError, RuntimeError):
    pass


class CorruptCheckpointError(SaatError):
    pass


class ShapeMismatchError(SaatError):
    """Checkpoint manifest disagrees with the model it is loaded into."""


class NonFiniteLossError(SaatError, FloatingPointError):
    pass


class ImageFormatError(SaatError):
    pass
