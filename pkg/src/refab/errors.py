"""Exception hierarchy shared by every module."""


class RefabError(Exception):
    """Base class; ``exit_code`` is used by the CLI."""

    exit_code = 2


class NonPositiveVelocity(RefabError):
    pass


class InfeasibleFlux(RefabError):
    pass


class ResolutionViolation(RefabError):
    pass


class NegativeInflux(RefabError):
    pass


class InvalidLadder(RefabError):
    pass


class DimensionMismatch(RefabError):
    pass


class NonSymmetricKernel(RefabError):
    pass


class NoConvergence(RefabError):
    """Iterative solver stopped at ``max_iter``; ``best`` holds the last iterate."""

    def __init__(self, residual, best=None, message=None):
        self.residual = float(residual)
        self.best = best
        super().__init__(message or f"no convergence (residual={self.residual:.3e})")


class ParseError(RefabError):
    exit_code = 1

    def __init__(self, line, key, reason):
        self.line = line
        self.key = key
        self.reason = reason
        super().__init__(f"line {line}: {key}: {reason}")
