"""Exception types shared across the package."""


class CylQGError(Exception):
    """Base class for all package errors."""


class GridError(CylQGError, ValueError):
    pass


class CompatibilityViolation(CylQGError):
    """Elliptic data fail the integral solvability condition."""

    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"basic compatibility residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )


class NonConvergence(CylQGError):
    pass


class CFLViolation(CylQGError):
    def __init__(self, dt, dt_max):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"time step {dt:.3e} exceeds CFL bound {dt_max:.3e}")


class NoContraction(CylQGError):
    """Picard iteration failed to contract; the caller should reduce dt."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics
        super().__init__(message)


class InitializationError(CylQGError):
    pass


class ConfigError(CylQGError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SnapshotError(CylQGError):
    pass
