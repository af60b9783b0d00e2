"""Exception hierarchy shared by all modules."""


class RwptError(Exception):
    """Base class for every error raised by the package."""


# stepdist
class DistributionError(RwptError, ValueError):
    pass


class NotSymmetric(DistributionError):
    pass


class AnisotropicCovariance(DistributionError):
    pass


class NotAProbability(DistributionError):
    pass


class DivergentMoment(DistributionError):
    pass


class UnsupportedDistribution(DistributionError):
    """The operation needs a finite support table."""


# lattice
class RegionError(RwptError, ValueError):
    pass


class UnboundedRegion(RegionError):
    pass


# kernel
class SingularSystem(RwptError, ArithmeticError):
    pass


class DomainTooLarge(RwptError):
    pass


class SourceOutsideDomain(RwptError, ValueError):
    pass


class SourceInsideTarget(RwptError, ValueError):
    pass


class SourceOutsideAnnulus(RwptError, ValueError):
    pass


class PointOutsideAnnulus(RwptError, ValueError):
    pass


# asymptotic
class NotAperiodic(RwptError, ValueError):
    pass


class GridLeakage(RwptError):
    pass


class InsufficientSpread(RwptError, ValueError):
    pass


class MissingFittedConstant(RwptError, KeyError):
    pass


# mc
class Capped(RwptError):
    """A path reached its step cap before any stop condition fired."""

    def __init__(self, record):
        super().__init__(f"path capped after {record.steps} steps")
        self.record = record


# cli
class ConfigError(RwptError, ValueError):
    pass
