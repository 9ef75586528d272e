"""Exception types shared across the package."""


class PanelError(ValueError):
    """Raised when sales/availability data is inconsistent."""


class ConvergenceError(RuntimeError):
    """Raised when an inner numerical solve cannot reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
