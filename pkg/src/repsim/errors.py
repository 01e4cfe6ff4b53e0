"""Exception hierarchy.

``InputError`` subclasses are problems with what the user handed us (CLI exit
code 2); ``ComputationError`` subclasses come out of the numerics (exit 3).
"""


class RepSimError(Exception):
    exit_code = 1


class InputError(RepSimError, ValueError):
    exit_code = 2


class ComputationError(RepSimError, ArithmeticError):
    exit_code = 3


# tensor files
class BadMagic(InputError):
    pass


class UnsupportedDtype(InputError):
    pass


class UnsupportedLayout(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class NonFinite(InputError):
    pass


class IoFailure(InputError):
    pass


# activation sets / manifests
class MissingFile(InputError):
    pass


class InconsistentBatch(InputError):
    pass


class DuplicateLayer(InputError):
    pass


class EmptySet(InputError):
    pass


# similarity
class TooFewRows(InputError):
    pass


class RowCountMismatch(InputError):
    pass


class OrderMismatch(InputError):
    pass


class DegenerateInput(ComputationError):
    pass


class NoSignal(DegenerateInput):
    """One or more layers are constant across examples."""

    def __init__(self, message, layers=()):
        super().__init__(message)
        self.layers = tuple(layers)


# topology / rendering
class LengthMismatch(InputError):
    pass


class NotSquare(InputError):
    pass


class TopologyError(InputError):
    pass


# detection
class UnknownLabel(InputError):
    def __init__(self, label):
        super().__init__(f"unknown label {label!r}")
        self.label = label


class MissingScores(InputError):
    pass


class AlreadyFlat(UserWarning):
    """flatten() was handed a 2-D tensor; it is passed through unchanged."""
