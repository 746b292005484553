"""Exception hierarchy shared by the library and the command line."""


class DGTimeError(Exception):
    """Base class for all errors raised by :mod:`dgtime`."""


class ConfigurationError(DGTimeError, ValueError):
    """Invalid user-supplied option, degree, rule size or study layout."""


class ValidationError(DGTimeError, ValueError):
    """Input matrices or vectors violate the model's structural assumptions."""


class AssemblyError(DGTimeError):
    """Time matrices or slab operators could not be assembled."""


class SolverError(DGTimeError):
    """A slab system could not be solved to the requested tolerance.

    Attributes
    ----------
    residual : float or None
        Final relative residual when the failure came from the Krylov solver.
    slab : int or None
        One-based slab index, filled in by the marching driver.
    """

    def __init__(self, message, residual=None, slab=None):
        super().__init__(message)
        self.residual = residual
        self.slab = slab


class MatrixMarketError(DGTimeError, ValueError):
    """Malformed Matrix Market input; ``lineno`` is one-based when known."""

    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)
        self.lineno = lineno
        self.path = path
