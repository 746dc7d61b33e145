"""Exceptions raised throughout crpsrft

All of them derive from builtin exceptions so that callers can keep catching
``ValueError``, ``RuntimeError`` or ``OSError``.
"""

# License: BSD 3 clause


class ConfigError(ValueError):
    """Invalid or inconsistent configuration"""


class StabilityError(ConfigError):
    """A numerical scheme was asked to run outside of its stability region

    Parameters
    ----------
    message : str
    bound : float
        the violated bound (e.g. the maximum admissible CFL number)
    value : float
        the value that was obtained with the requested configuration
    """
    def __init__(self, message, bound=None, value=None):
        super().__init__(message)
        self.bound = bound
        self.value = value


class ShapeError(ValueError):
    """Operands with incompatible shapes

    Parameters
    ----------
    op : str
        name of the operation
    shapes : tuple of shapes
        shapes of the operands, in order
    """
    def __init__(self, op, *shapes, message=None):
        shapes_str = ' and '.join(str(tuple(s)) for s in shapes)
        if message is None:
            message = f'{op}: incompatible shapes {shapes_str}.'
        else:
            message = f'{op}: {message} (got shapes {shapes_str}).'
        super().__init__(message)
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)


class NumericalError(RuntimeError):
    """NaN or Inf where finite values are required

    Parameters
    ----------
    message : str
    epoch, step : int, optional
        training position at which the failure occurred
    """
    def __init__(self, message, epoch=None, step=None):
        if epoch is not None or step is not None:
            message = f'{message} (epoch={epoch}, step={step})'
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class FormatError(OSError):
    """Malformed, truncated or corrupted binary container"""
