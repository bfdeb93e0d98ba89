"""Exception and warning types shared across the package."""


class EtchmapError(Exception):
    """Base class for all etchmap errors."""


class InvalidArgument(EtchmapError, ValueError):
    """A precondition on an argument was violated."""


class InvalidInput(InvalidArgument):
    """An input file or its grid is incompatible with the configuration."""


class UnsupportedForFamily(EtchmapError, ValueError):
    """The requested quantity is not defined for this beam family."""


class NumericFailure(EtchmapError, RuntimeError):
    """A numerical routine failed to reach its accuracy target.

    Diagnostics (last iterate, achieved error, ...) are attached as
    keyword attributes so callers can inspect what went wrong.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
        for key, value in diagnostics.items():
            setattr(self, key, value)


class ConvergenceFailure(NumericFailure):
    """Iteration cap reached before the convergence certificate held."""


class AssemblyInconsistency(EtchmapError, RuntimeError):
    """An assembled operator violated a structural invariant (e.g. PSD)."""


class ResourceLimit(EtchmapError, RuntimeError):
    """A configured memory or size cap would be exceeded."""


class UsageError(EtchmapError):
    """Bad command line or configuration file (exit code 2)."""


class RankDeficiencyWarning(UserWarning):
    """Normal system is rank deficient; a least-norm solution is returned."""


class ConditionNumberWarning(UserWarning):
    """Kernel system is severely ill conditioned; solution may be noisy."""


class TruncationWarning(UserWarning):
    """Requested truncation threshold lies above the whole spectrum."""
