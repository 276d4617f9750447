"""Exception hierarchy shared by all retroq modules."""


class RetroqError(Exception):
    """Base class for every error raised by retroq."""


class DimMismatch(RetroqError, ValueError):
    pass


class PartyOutOfRange(RetroqError, IndexError):
    pass


class NonHermitian(RetroqError, ValueError):
    pass


class PacketTooNarrow(RetroqError, ValueError):
    pass


class PacketTouchesBoundary(RetroqError, ValueError):
    pass


class SolverFailure(RetroqError, ArithmeticError):
    """Tridiagonal solve hit a vanishing pivot or produced non-finite values."""


class NullConditional(RetroqError, ValueError):
    """Conditioning state has (numerically) zero overlap with the joint state."""


class ImpossibleOutcomeSet(RetroqError, ValueError):
    pass


class IncompleteFutureSpec(RetroqError, ValueError):
    pass


class PostSelectionSingular(RetroqError, ZeroDivisionError):
    """|<f|i>| is at or below the post-selection floor."""


class IncompleteBasis(RetroqError, ValueError):
    pass


class VelocitySingular(RetroqError, ZeroDivisionError):
    pass


class InsufficientSamples(RetroqError, ValueError):
    pass


class ParseError(RetroqError, ValueError):
    pass


class ValidationError(RetroqError, ValueError):
    """Config failed schema validation.

    ``errors`` holds every problem found as ``(key_path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path or '<root>'}: {msg}" for path, msg in self.errors]
        super().__init__("; ".join(lines))
