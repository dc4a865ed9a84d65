"""Exception hierarchy shared by all kinephase modules."""


class KinephaseError(Exception):
    """Base class for every error raised by this package."""


class DomainError(KinephaseError, ValueError):
    """A state left the admissible band of the speed law or coordinate map."""


class NoConvergence(KinephaseError):
    """An iterative solve did not converge."""


class DegeneratePulse(KinephaseError):
    """The pulse half-width collapsed toward 0 or filled the domain."""


class InvalidSpec(KinephaseError, ValueError):
    """A noise specification is malformed."""


class Instability(KinephaseError):
    """A time integration produced non-finite values."""


class NotDecayed(KinephaseError):
    """Variation traces did not decay enough for the quadratures to be trusted."""


class PulseCollapse(KinephaseError):
    """A stochastic trial lost its pulse (half-width left the guard band)."""


class AllTrialsFailed(KinephaseError):
    """Every trial of an ensemble collapsed."""


class ConfigError(KinephaseError, ValueError):
    """An experiment configuration is invalid."""
