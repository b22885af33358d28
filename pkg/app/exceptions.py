# app/exceptions.py
from typing import Any, List, Optional


class LiouvilleLabError(Exception):
    """Error base del laboratorio"""


class ConfigError(LiouvilleLabError):
    """Configuración de experimento inválida (exit code 2)"""


# global_family
class TailTooLarge(LiouvilleLabError):
    pass


class MaximaNotSeparated(LiouvilleLabError):
    pass


class DegenerateProbes(LiouvilleLabError):
    pass


# circulant_algebra
class SizeCap(LiouvilleLabError):
    pass


# disk_green
class CoincidentPoints(LiouvilleLabError):
    pass


class TooFewSamples(LiouvilleLabError):
    pass


# pohozaev_quadrature
class BallOutsideDomain(LiouvilleLabError):
    pass


# blowup_asymptotics
class FitDiverged(LiouvilleLabError):
    pass


class SingularKernelMatrix(LiouvilleLabError):
    pass


class NewtonDiverged(LiouvilleLabError):
    pass


class NotSingleBubble(LiouvilleLabError):
    pass


# liouville_solver
class NewtonStalled(LiouvilleLabError):
    """Newton no alcanzó la tolerancia; conserva el mejor iterado"""

    def __init__(self, message: str, best_iterate: Any = None, residual_norm: Optional[float] = None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.residual_norm = residual_norm


class BranchTerminated(LiouvilleLabError):
    """La continuación se detuvo; conserva la rama parcial"""

    def __init__(self, reason: str, branch: Optional[List[Any]] = None):
        super().__init__(reason)
        self.reason = reason
        self.branch = branch or []


class PeakCountMismatch(LiouvilleLabError):
    pass
