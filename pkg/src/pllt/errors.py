"""Exception hierarchy shared by the simulation, control and oracle layers."""


class PLLTError(Exception):
    """Base class for every error raised by :mod:`pllt`."""


class RunFailure(PLLTError):
    """A time-domain run stopped early. ``t`` is the simulated failure time."""

    def __init__(self, message, t=None):
        if t is not None:
            message = f"{message} (t = {t:.6g} s)"
        super().__init__(message)
        self.t = t


class IntegrationDivergence(RunFailure):
    pass


class FilterDivergence(RunFailure):
    pass


class LoopFailure(RunFailure):
    """Frequency collapsed below the floor of the oscillator."""


class UndefinedPhase(RunFailure):
    """A harmonic used for phase detection has (numerically) zero amplitude."""


class CorrectorFailure(PLLTError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual = {residual:.3e})")
        self.residual = residual


class ComparisonImpossible(PLLTError):
    pass


class ConfigError(PLLTError):
    """Invalid run configuration.

    ``key`` names the offending entry when known; parse errors carry the
    ``line`` and ``column`` of the problem instead.
    """

    def __init__(self, message, key=None, line=None, column=None):
        where = key
        if line is not None:
            where = f"line {line}, column {column}"
        super().__init__(message if where is None else f"{where}: {message}")
        self.key = key
        self.line = line
        self.column = column
