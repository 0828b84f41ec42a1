"""Exception hierarchy shared by all modules."""


class LqrhcError(Exception):
    """Base class for domain-level failures."""


class SingularMatrix(LqrhcError):
    """A pivot fell below the singularity threshold."""


class NotPD(LqrhcError):
    """A Cholesky pivot was not strictly positive."""


class EigenvalueNonConvergence(LqrhcError):
    pass


class SingularInnerMatrix(LqrhcError):
    """``R + B^T P B`` is singular, so the Riccati map is undefined at ``P``."""


class NonConvergence(LqrhcError):
    pass


class NoCertificate(LqrhcError):
    """No storage matrix making the rotated stage cost positive definite."""


class NotStabilizable(LqrhcError):
    pass


class NotControllable(LqrhcError):
    pass


class PrestabilizerFailure(LqrhcError):
    pass


class InfeasibleQp(LqrhcError):
    pass


class MaxIterations(LqrhcError):
    pass
