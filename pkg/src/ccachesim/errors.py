"""Exception types raised by the simulator."""


class SimulationError(Exception):
    """Base class for every simulator fault."""


class ConfigError(SimulationError, ValueError):
    pass


class CoherentAccessToCData(SimulationError):
    """A plain Load/Store touched a line that holds commutative data."""


class SetPinned(SimulationError):
    """Every way of an L1 set holds a non-mergeable CData line."""

    def __init__(self, core, set_index):
        super().__init__(f"core {core}: L1 set {set_index} is fully pinned by CData lines")
        self.core = core
        self.set_index = set_index


class SourceBufferFull(SimulationError):
    pass


class MergeSlotEmpty(SimulationError):
    pass


class UnknownMergeFunction(SimulationError, KeyError):
    pass


class NoMergeInFlight(SimulationError):
    pass


class WriteToReadOnlyRegister(SimulationError):
    pass


class MergeFunctionOutOfBounds(SimulationError):
    """A merge function touched state other than its three merge registers."""


class ZeroSourceFactor(SimulationError, ZeroDivisionError):
    pass


class UnlockWithoutLock(SimulationError):
    pass


class DeadlockDetected(SimulationError):
    pass


class ZeroCycleRun(SimulationError, ZeroDivisionError):
    pass


class MismatchedReports(SimulationError, ValueError):
    pass


class LineLocked(Exception):
    """Internal signal: the access must be retried because an LLC line is locked.

    Raised before any state is mutated, so the scheduler can replay the op.
    """

    def __init__(self, line, holder):
        super().__init__(line, holder)
        self.line = line
        self.holder = holder


class NotCData(SimulationError):
    """A commutative access targeted memory outside every CData region."""
