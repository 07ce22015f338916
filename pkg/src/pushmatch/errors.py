"""Exception types raised by pushmatch."""


class PushMatchError(Exception):
    """Base class for all pushmatch errors."""


class EmptySupport(PushMatchError, ValueError):
    pass


class NegativeWeight(PushMatchError, ValueError):
    pass


class DimensionMismatch(PushMatchError, ValueError):
    pass


class LengthMismatch(PushMatchError, ValueError):
    pass


class NonFinitePoint(PushMatchError, ValueError):
    pass


class DuplicateTheta(PushMatchError, ValueError):
    pass


class UnmappedAtom(PushMatchError, ValueError):
    """An atom of the input measure is not a tabulated point of the map."""


class AtomOutsideRange(PushMatchError, ValueError):
    pass


class ZeroMassOnRange(PushMatchError, ValueError):
    """The data measure puts no mass on the range of the map."""


class InvalidMass(PushMatchError, ValueError):
    pass


class EmptyRange(PushMatchError, ValueError):
    pass


class SupportTooLarge(PushMatchError, ValueError):
    pass


class NonSmoothGenerator(PushMatchError, ValueError):
    pass


class RangeTooLarge(PushMatchError, ValueError):
    pass


class GridTooFine(PushMatchError, ValueError):
    pass


class DegenerateNormalizer(PushMatchError, ArithmeticError):
    pass


class InvalidParams(PushMatchError, ValueError):
    pass


class ConfigError(PushMatchError, ValueError):
    pass


class VerificationError(PushMatchError, RuntimeError):
    """An internal optimality certificate did not hold."""
