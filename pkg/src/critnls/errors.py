"""Exception hierarchy shared by all modules."""


class CritNLSError(Exception):
    """Base class for all package errors."""


class IntegrationFailure(CritNLSError):
    """The ODE step-size controller could not meet the requested tolerance."""


class RootNotBracketed(CritNLSError):
    pass


class IllConditioned(CritNLSError):
    """A least-squares fit was requested on data that cannot determine it."""


class NoAdmissibleR(CritNLSError):
    pass


class QuadratureFailure(CritNLSError):
    pass


class DomainEscape(CritNLSError):
    """A dilation would push non-negligible mass outside the periodic box."""


class SingularTime(CritNLSError):
    """The MDFM factorization is not usable at the requested time."""


class UnderResolved(SingularTime):
    """A chirp of the MDFM factorization aliases on the grid."""


class MassEscape(CritNLSError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class BlowupDetected(CritNLSError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class SpectralTail(CritNLSError):
    """Too much mass sits in the top third of the spectrum."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class NonMonotoneTime(CritNLSError):
    pass


class LadderTooShort(CritNLSError):
    pass


class NotApplicable(CritNLSError):
    pass


class PreconditionError(CritNLSError):
    pass


class ConfigError(CritNLSError):
    """A run configuration violates an invariant; ``field`` names it."""

    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field
