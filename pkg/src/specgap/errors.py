"""Exception hierarchy shared by all modules."""


class SpecgapError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(SpecgapError, ValueError):
    """A parameter or input violates a documented precondition."""


class ResolutionError(SpecgapError):
    """A quadrature or truncation did not converge to the requested tolerance."""


class NumericalError(SpecgapError):
    """A linear-algebra routine failed or returned an unusable result."""


class ConsistencyError(SpecgapError):
    """An internal cross-check between two independent routes failed."""


class BasisError(ConsistencyError):
    """The Hermite basis does not satisfy its ladder identities."""


class DegenerateKernelError(NumericalError):
    """The stationary eigenvalue is not simple within tolerance."""


class NormalizationError(NumericalError):
    """The kernel vector has (numerically) zero mass and cannot be normalized."""
