"""Exception types shared across the package."""


class ObjParseError(ValueError):
    """Malformed OBJ input. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonManifoldError(ValueError):
    """Mesh topology violates the manifold assumption an operation needs."""


class NotWatertightError(ValueError):
    """Mesh is not closed, so inside/outside parity is undefined."""


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite loss. Carries the iteration index."""

    def __init__(self, iteration: int, message: str = ""):
        detail = message or "loss became non-finite"
        super().__init__(f"iteration {iteration}: {detail}")
        self.iteration = iteration


class TransportError(RuntimeError):
    """Remote embedding endpoint failed (network, timeout, bad payload)."""


class CheckpointError(ValueError):
    """Checkpoint bytes are malformed or of an unsupported version."""
