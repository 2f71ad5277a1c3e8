"""Exception hierarchy shared by all cavitydft modules."""


class CavityDftError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(CavityDftError):
    """Invalid run setup (bad grid, bad config keys, impossible sizes).

    ``violations`` collects every detected problem so callers can report
    all of them at once instead of failing on the first.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [message]


class UsageError(CavityDftError):
    """Operation called with inconsistent in-memory inputs."""


class GridMismatchError(UsageError):
    """Fields passed to one operation live on different grids."""


class ConvergenceError(CavityDftError):
    """An iterative solver exhausted its budget.

    Carries the residual / energy history so non-convergence reports can
    include oscillation diagnostics.
    """

    def __init__(self, message, history=None, diagnostics=None):
        super().__init__(message)
        self.history = history
        self.diagnostics = diagnostics or {}


class StepSizeError(CavityDftError):
    """Per-step norm drift exceeded the allowed bound; reduce dt."""


class PropagationAborted(CavityDftError):
    """NaN detected during propagation; carries the last good state."""

    def __init__(self, message, series=None, orbitals=None, time=None):
        super().__init__(message)
        self.series = series
        self.orbitals = orbitals
        self.time = time


class AnalysisError(CavityDftError):
    """Post-processing found data inconsistent with the requested analysis."""
