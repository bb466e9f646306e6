class LivsicError(Exception):
    """Base class for every error raised by livsic-tools"""


class ConfigError(LivsicError):
    pass


# Base dynamics
class TooFarApart(LivsicError):
    pass


class InadmissibleSplice(LivsicError):
    pass


class InadmissibleWord(LivsicError):
    pass


class NotCloseEnough(LivsicError):
    pass


class SingularClosing(LivsicError):
    pass


class PeriodBudgetExceeded(LivsicError):
    pass


class NotMixing(LivsicError):
    pass


class NoConnector(LivsicError):
    pass


# Operator algebra
class DimMismatch(LivsicError):
    pass


class NonFinite(LivsicError):
    pass


class NotInvertible(LivsicError):
    pass


# Cocycle engine and periodic analysis
class TailNotNegligible(LivsicError):
    pass


class ClosingFailed(LivsicError):
    pass


class ProfileViolated(LivsicError):
    pass


# Holonomy
class NotOnStableLeaf(LivsicError):
    pass


class NotOnUnstableLeaf(LivsicError):
    pass


class NoConvergence(LivsicError):
    """Raised only when a caller asks for a certified holonomy; batches record it instead"""


# Transfer solver
class BracketFailed(LivsicError):
    pass


class OrbitNotDense(LivsicError):
    pass


class ObstructionFailed(LivsicError):
    pass


class InsufficientSpread(LivsicError):
    pass
