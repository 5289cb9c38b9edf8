class ButterflyError(Exception):
    """Base class for every error raised by the recovery and factorization stack."""
    pass


class DimensionError(ButterflyError, ValueError):
    """Raised when a shape, rank or count is incompatible with the operands."""
    pass


class InputError(ButterflyError, ValueError):
    """Raised for invalid input values (wrapped phases outside [0,1), duplicate points, NaNs)."""
    pass


class DisconnectedGraphError(ButterflyError):
    """Raised when a spanning tree is requested on a graph with more than one component."""

    def __init__(self, component_count: int):
        self.component_count = component_count
        super().__init__(f"Graph is disconnected: found {component_count} connected components.")


class ConfigurationError(ButterflyError):
    """Raised when an experiment or factorization is configured inconsistently."""
    pass


class NumericalFailure(ButterflyError):
    """Raised when a decomposition fails to converge or a measured error exceeds the requested bound."""
    pass
