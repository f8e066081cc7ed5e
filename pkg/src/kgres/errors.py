"""Exception hierarchy shared by all kgres modules."""


class KGError(Exception):
    """Base class for every error raised by kgres."""


class UsageError(KGError, ValueError):
    """Invalid arguments or preconditions supplied by the caller."""


class ConfigError(UsageError):
    """A scenario document failed validation.

    ``key`` names the offending entry when one can be identified.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class BlowupFlagError(KGError):
    """A field contains non-finite samples."""


class NoConvergenceError(KGError):
    """An iterative solver failed to converge or to bracket a root."""


class BlowupError(KGError):
    """Raised by a single time step once the blowup criterion fires.

    The triggering :class:`~kgres.evolution.BlowupReport` is available as
    ``report``.
    """

    def __init__(self, report):
        super().__init__(
            f"blowup at t={report.time:.6g} (sup|u| = {report.value:.3g})"
        )
        self.report = report
