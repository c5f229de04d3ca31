"""Engine error types.

Verification failures are data (certificates, diagnostics); exceptions
are reserved for inputs or states the engine cannot proceed from.
"""


class FlowhomError(Exception):
    """Base class for engine errors."""


class ConfigParse(FlowhomError):
    pass


class UnknownCatalogEntry(FlowhomError):
    pass


class RankDeficient(FlowhomError):
    pass


class EmptyManifold(FlowhomError):
    pass


class OffManifold(FlowhomError):
    pass


class FixedLocusNotSubmanifold(FlowhomError):
    pass


class EpsTooLarge(FlowhomError):
    pass


class UnrecognizedLocusShape(FlowhomError):
    pass


class DegenerateLinearization(FlowhomError):
    pass


class EigenpairMismatch(FlowhomError):
    pass


class NotSelfAdjoint(FlowhomError):
    pass


class ZeroDiagonalEntry(FlowhomError):
    pass


class Divergence(FlowhomError):
    pass


class StepUnderflow(FlowhomError):
    pass


class NoConvergence(FlowhomError):
    pass


class ZeroUnstableDim(FlowhomError):
    pass


class DimensionMismatch(FlowhomError):
    pass


class SliceMissed(FlowhomError):
    pass


class FrameBlowup(FlowhomError):
    pass


class UnresolvedBreaking(FlowhomError):
    pass


class NonTransverseSection(FlowhomError):
    pass


class InvalidPoset(FlowhomError):
    pass


class NotTransverse(FlowhomError):
    pass


class DSquaredNonzero(FlowhomError):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class DegreeMismatch(FlowhomError):
    pass


class IdentityFailed(FlowhomError):
    pass


class NonFreeAction(FlowhomError):
    pass


class JNotChainMap(FlowhomError):
    pass


class NotChainMap(FlowhomError):
    pass


class NotIsolating(FlowhomError):
    pass


class TruncationTooLow(FlowhomError):
    pass
