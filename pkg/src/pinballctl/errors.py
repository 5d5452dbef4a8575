"""Exception types shared across the package."""


class PinballError(Exception):
    """Base class for all package errors."""


class ConfigError(PinballError, ValueError):
    """Invalid configuration value or unparsable config file."""


class GeometryError(PinballError, ValueError):
    """Bodies overlap, leave the domain, or are otherwise ill-placed."""


class SolverDivergenceError(PinballError, RuntimeError):
    """Iterative pressure solve failed to reach tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class InstabilityError(PinballError, RuntimeError):
    """Non-finite values appeared in the flow fields."""


class StateError(PinballError, RuntimeError):
    """State window queried before any sample was pushed."""


class CheckpointError(PinballError, RuntimeError):
    """Checkpoint file is missing, truncated, or has a wrong version."""


class RpcError(PinballError, RuntimeError):
    """Base class for RPC failures."""


class RpcConnectError(RpcError):
    """Server unreachable or connect timed out."""


class RpcTransportError(RpcError):
    """Connection lost or timed out mid-session."""


class RpcProtocolError(RpcError):
    """Peer violated the wire protocol or rejected a request."""
