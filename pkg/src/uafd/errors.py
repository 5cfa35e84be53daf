"""Exception hierarchy shared across the package."""


class UafdError(Exception):
    """Base class for all package errors."""


# signal
class InsufficientData(UafdError):
    def __init__(self, label, available, requested):
        super().__init__(
            f"class {label}: only {available} bursts available, {requested} requested"
        )
        self.label = label
        self.available = available
        self.requested = requested


class EmptySplit(UafdError):
    pass


# noise
class UndefinedSNR(UafdError):
    pass


class DegenerateRealization(UafdError):
    pass


# nn engine
class ShapeMismatch(UafdError, ValueError):
    pass


class NonFiniteError(UafdError, FloatingPointError):
    pass


class DegenerateBatch(UafdError):
    pass


class EmptySequence(UafdError):
    pass


class InvalidRate(UafdError, ValueError):
    pass


class DisconnectedGraph(UafdError):
    pass


# models
class InvalidSpec(UafdError, ValueError):
    pass


class NonFiniteLoss(UafdError):
    pass


class VersionMismatch(UafdError):
    pass


class CorruptCheckpoint(UafdError):
    pass


# uncertainty
class EmptyInput(UafdError, ValueError):
    pass


class NoPositives(UafdError, ValueError):
    pass


class LengthMismatch(UafdError, ValueError):
    pass
