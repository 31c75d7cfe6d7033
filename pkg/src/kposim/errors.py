"""Exception hierarchy shared across kposim."""


class KpoSimError(Exception):
    """Base class for all kposim errors."""


class InvalidParams(KpoSimError, ValueError):
    pass


class TruncationError(KpoSimError):
    """Population or amplitude reaches the edge of the truncated Fock space."""


class DimensionError(KpoSimError, ValueError):
    pass


class DimensionMismatch(KpoSimError, ValueError):
    pass


class NotHermitian(KpoSimError, ValueError):
    pass


class ToleranceFailure(KpoSimError):
    """Integrator could not meet its tolerance or broke a density-matrix invariant."""


class FitDiverged(KpoSimError):
    pass


class NonPositiveTau(KpoSimError):
    pass


class InvalidBinWidth(KpoSimError, ValueError):
    pass


class InvalidBin(KpoSimError, ValueError):
    pass


class EmptySelection(KpoSimError):
    pass


class ChannelCollision(KpoSimError, ValueError):
    pass


class NoConvergence(KpoSimError):
    pass


class SweepFailed(KpoSimError):
    pass


class ConfigError(KpoSimError, ValueError):
    """Config parse/validation failure, anchored to a line when possible."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
