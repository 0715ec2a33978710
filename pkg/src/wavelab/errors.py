"""Exception types raised across the package."""


class WavelabError(Exception):
    """Base class for all package errors."""


class CoincidentPositions(WavelabError):
    pass


class ChartDomainExceeded(WavelabError):
    pass


class TripleCollisionAnomaly(WavelabError):
    pass


class StepSizeUnderflow(WavelabError):
    pass


class NotInClass(WavelabError):
    pass


class Diverged(WavelabError):
    pass


class PlanInvalid(WavelabError):
    pass


class DomainMismatch(WavelabError):
    pass


class CollisionInWindow(WavelabError):
    pass


class CFLViolation(WavelabError):
    pass


class FrameMismatch(WavelabError):
    pass


class PastBlowup(WavelabError):
    pass


class WeightInvalid(WavelabError):
    pass


class ConfigInvalid(WavelabError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
