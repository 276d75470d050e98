"""Typed errors raised across the package.

Every error that callers are expected to catch has its own class; generic
misuse (wrong shapes, bad argument types) raises plain ValueError/TypeError.
"""


class MmgeoError(Exception):
    """Base class for all package-specific errors."""


# ---- space validation ------------------------------------------------------

class NegativeDistance(MmgeoError):
    pass


class AsymmetricMatrix(MmgeoError):
    pass


class NonzeroDiagonal(MmgeoError):
    pass


class TriangleViolation(MmgeoError):
    pass


class WeightsNotProbability(MmgeoError):
    pass


# ---- packing / nets --------------------------------------------------------

class NonpositiveEps(MmgeoError):
    pass


class TooLarge(MmgeoError):
    """Instance exceeds the exact-computation size cap."""


class NetTooLarge(MmgeoError):
    """Lipschitz net enumeration would exceed the configured member cap."""

    def __init__(self, bound: int, cap: int):
        super().__init__(
            f"net enumeration exceeds the cap: more than {bound} members, cap {cap}"
        )
        self.bound = bound
        self.cap = cap


# ---- separation ------------------------------------------------------------

class TooLargeForExact(MmgeoError):
    """Exact separation search exceeded its size or node budget."""


class AlphaOutOfRange(MmgeoError):
    pass


class BadKappa(MmgeoError):
    pass


class NotRational(MmgeoError):
    pass


# ---- witnesses / certificates ----------------------------------------------

class TOutOfRange(MmgeoError):
    pass


class EqualIndices(MmgeoError):
    pass


class EmptyBase(MmgeoError):
    """Extension base set is empty."""


class BlockMassTooSmall(MmgeoError):
    pass


class BlocksNotSeparated(MmgeoError):
    pass


class BadTau(MmgeoError):
    pass


class NoBlocksFound(MmgeoError):
    pass


class CertificateInvalid(MmgeoError):
    """A serialized certificate failed re-verification."""


# ---- groups ----------------------------------------------------------------

class ChainTooShort(MmgeoError):
    """The requested witness needs a deeper group in the chain."""


class MetricNotRightInvariant(MmgeoError):
    pass


class DegreeMismatch(MmgeoError):
    pass


class NotAGroupSpace(MmgeoError):
    pass


class BadSeed(MmgeoError):
    pass


# ---- cli -------------------------------------------------------------------

class ConfigError(MmgeoError):
    pass


class IoError(MmgeoError):
    """Filesystem failure while emitting or reading artifacts."""
