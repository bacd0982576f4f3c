"""Exception types shared across the engine."""


class VideoloomError(Exception):
    """Base class for all engine errors."""


class ParameterError(VideoloomError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(VideoloomError, ValueError):
    """Tensor shapes are inconsistent with the operation's contract."""


class ScheduleError(VideoloomError, ValueError):
    """A noise-schedule value is invalid (e.g. alpha-bar outside (0, 1])."""


class CoverageError(VideoloomError, ValueError):
    """A frame or pixel received zero total blending weight."""


class NumericError(VideoloomError, ArithmeticError):
    """A computation produced non-finite values."""


class ConfigError(VideoloomError, ValueError):
    """Configuration file or value is invalid."""


class FormatError(VideoloomError, ValueError):
    """A serialized artifact (NPY, CSV, PPM) is malformed."""


class DenoiserError(VideoloomError, RuntimeError):
    """A denoiser implementation failed; carries clip/timestep context."""


class BridgeError(DenoiserError):
    """Wire-protocol failure while talking to an out-of-process denoiser."""
