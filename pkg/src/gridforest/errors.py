"""Exception hierarchy shared by every solver stage."""

from __future__ import annotations


class GridForestError(Exception):
    """Base class. ``stage`` is filled in when a solver pipeline re-raises."""

    stage: str | None = None


class ParseError(GridForestError, ValueError):
    pass


class ValidationError(GridForestError, ValueError):
    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


class NonPositiveBase(GridForestError, ValueError):
    pass


class UnknownEdge(GridForestError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown edge"


class UnknownBus(GridForestError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown bus"


class NotRadial(GridForestError, ValueError):
    pass


class NotForest(GridForestError, ValueError):
    pass


class NotConverged(GridForestError, RuntimeError):
    pass


class Disconnected(GridForestError, ValueError):
    pass


class InsufficientGeneration(GridForestError, ValueError):
    pass


class UnreachableBus(GridForestError, ValueError):
    pass


class StrandedBuses(GridForestError, RuntimeError):
    pass


class AllCandidatesInfeasible(GridForestError, RuntimeError):
    pass


class RepairFailed(GridForestError, RuntimeError):
    pass


class KappaTooLarge(GridForestError, ValueError):
    pass


class NoSwapAvailable(GridForestError, ValueError):
    pass


class NoFeasibleSolution(GridForestError, RuntimeError):
    pass


class NoFeasibleForest(NoFeasibleSolution):
    pass


class TooLarge(GridForestError, ValueError):
    pass


class InvalidParams(GridForestError, ValueError):
    pass
