"""Exception hierarchy. Every domain error derives from :class:`PerftxError`."""


class PerftxError(Exception):
    """Base class for domain errors (bad data, infeasible requests)."""


class ConfigSpaceError(PerftxError, ValueError):
    pass


class KernelError(PerftxError, ValueError):
    """Dimension mismatch or non-finite kernel input."""


class FactorizationError(PerftxError, ArithmeticError):
    """Cholesky failed even at the largest jitter level."""


class FitError(PerftxError, RuntimeError):
    pass


class DataError(PerftxError, ValueError):
    """Malformed measurement files or inconsistent tables."""


class ScenarioError(PerftxError, ValueError):
    pass


class ZeroVarianceError(PerftxError, ValueError):
    """Correlation requested for a response with zero variance."""


class APEError(PerftxError, ZeroDivisionError):
    """APE is undefined for a zero actual value."""
