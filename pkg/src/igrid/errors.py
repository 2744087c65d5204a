"""Exception hierarchy used across the package."""


class IGridError(Exception):
    pass


class ConstraintError(IGridError, ValueError):
    """No process grid satisfies the requested fixed axes."""


class BoundsError(IGridError, IndexError):
    pass


class GridStateError(IGridError, RuntimeError):
    """Grid used before init, after finalize, or initialized twice."""


class GridSizeError(IGridError, ValueError):
    pass


class ConfigError(IGridError, ValueError):
    pass


class StaggeringError(IGridError, ValueError):
    """Field size is incompatible with the grid's local size and overlap."""


class PoolError(IGridError, RuntimeError):
    pass


class WidthError(IGridError, ValueError):
    """Boundary widths for communication hiding are invalid."""


class ShapeError(IGridError, ValueError):
    pass


class ParameterError(IGridError, ValueError):
    pass


class TransportError(IGridError, RuntimeError):
    """Failure in the message layer.

    ``peer`` is the remote rank involved, when known.
    """

    def __init__(self, message, peer=None):
        super().__init__(message)
        self.peer = peer


class TransportTimeout(TransportError, TimeoutError):
    pass


class ProtocolError(TransportError):
    pass


class FramingError(ProtocolError):
    pass


class RendezvousError(TransportError):
    pass
