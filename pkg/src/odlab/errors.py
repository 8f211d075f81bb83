"""Exception types shared across the package."""


class OdlabError(Exception):
    """Base class for all package errors."""


class DomainError(OdlabError, ValueError):
    """A query point lies outside the set where the operation is defined."""


class GeometryError(OdlabError):
    """Degenerate geometry (vanishing gradient, corner query, collinear hull input)."""


class ConvergenceError(OdlabError):
    """An iterative routine did not converge within its iteration budget."""


class UnsupportedError(OdlabError):
    """The operation is not available for this scene (dimension, metric kind)."""


class SceneError(OdlabError):
    """Malformed or inconsistent scene description."""


class SolverError(OdlabError):
    """Eikonal solver failure (bad grid, metric out of range, source inside obstacle)."""


class TraceError(OdlabError):
    """A minimizer backtrace stagnated before reaching the source ball."""


class PreconditionError(OdlabError, ValueError):
    """An experiment was requested on an input that violates its precondition."""
