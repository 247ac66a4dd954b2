"""Exception types shared across the package."""


class VortexModuliError(Exception):
    pass


class InvalidLatticeError(VortexModuliError, ValueError):
    pass


class InvalidGridError(VortexModuliError, ValueError):
    pass


class BidegreeError(VortexModuliError, ValueError):
    pass


class DimensionError(VortexModuliError, ValueError):
    pass


class MetricError(VortexModuliError, ValueError):
    """Raised when a Hermitian metric (or automorphism field) is not positive definite."""


class ConnectionError_(VortexModuliError, ValueError):
    """A tensor slot was left without connection data."""


class HolomorphyError(VortexModuliError, ValueError):
    pass


class StabilityUnsupported(VortexModuliError):
    pass


class NonConvergenceError(VortexModuliError, RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerationError(NonConvergenceError):
    pass


class IllConditionedError(VortexModuliError, RuntimeError):
    pass


class PreconditionError(VortexModuliError, ValueError):
    pass


class DegenerateFamilyError(VortexModuliError, ValueError):
    pass


class GridError(VortexModuliError, ValueError):
    pass


class FormatError(VortexModuliError, ValueError):
    pass


class ConfigError(VortexModuliError, ValueError):
    pass
